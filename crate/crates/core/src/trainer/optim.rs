use crate::error::{shape_err, Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// AdamW hyperparameters. Weight decay is decoupled from the gradient:
/// every step first scales parameters by `1 - lr·wd`, then applies the
/// bias-corrected Adam update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-3,
        }
    }
}

/// Moment estimates, step count, and the current learning rate.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
    pub lr: f64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>, lr: f64) -> Self {
        let (m, v) = params
            .into_iter()
            .map(|p| (Tensor::zeros(p.shape()), Tensor::zeros(p.shape())))
            .unzip();
        Self { m, v, step: 0, lr }
    }

    /// One AdamW update. All gradients are checked before any parameter is
    /// touched, so a rejected step leaves the state unchanged.
    pub fn step(&mut self, hp: &AdamW, params: Vec<(String, &mut Tensor<T>)>, grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(shape_err!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            ));
        }
        for ((name, p), (gr, m)) in params.iter().zip(grads.iter().zip(&self.m)) {
            if p.shape() != gr.shape() || p.shape() != m.shape() {
                return Err(shape_err!(
                    "parameter '{name}' {:?}, gradient {:?}, moments {:?}",
                    p.shape(),
                    gr.shape(),
                    m.shape()
                ));
            }
            if !gr.is_finite() {
                return Err(Error::NonFinite(format!("gradient of parameter '{name}'")));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let lr = T::lit(self.lr);
        let decay = T::lit(1.0 - self.lr * hp.weight_decay);
        let (b1, b2) = (T::lit(hp.beta1), T::lit(hp.beta2));
        let c1 = T::lit(1.0 - hp.beta1.powi(t));
        let c2 = T::lit(1.0 - hp.beta2.powi(t));
        let eps = T::lit(hp.eps);
        let one = T::one();
        for (((_, p), gr), (m, v)) in params.into_iter().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let it = p
                .data_mut()
                .iter_mut()
                .zip(gr.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
            for ((pi, &gi), (mi, vi)) in it {
                *mi = b1 * *mi + (one - b1) * gi;
                *vi = b2 * *vi + (one - b2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *pi = *pi * decay - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Scales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Real>(grads: &mut [Tensor<T>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|&x| x.as_f64() * x.as_f64())
        .sum::<f64>()
        .sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let k = T::lit(max_norm / norm);
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|x| *x = *x * k);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f64) -> Tensor<f64> {
        Tensor::from_f64(&[1], &[v]).unwrap()
    }

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let mut p = one(1.5);
        let mut st = OptimizerState::new([&p], 1e-3);
        let hp = AdamW {
            weight_decay: 0.0,
            ..AdamW::default()
        };
        st.step(&hp, vec![("p".into(), &mut p)], &[one(0.0)]).unwrap();
        assert_eq!(p.data()[0], 1.5);
    }

    #[test]
    fn decoupled_decay_scales_parameter() {
        let mut p = one(2.0);
        let mut st = OptimizerState::new([&p], 1e-3);
        st.step(&AdamW::default(), vec![("p".into(), &mut p)], &[one(0.0)]).unwrap();
        assert_eq!(p.data()[0], 2.0 * (1.0 - 1e-6));
    }

    #[test]
    fn non_finite_gradient_is_rejected_with_name() {
        let mut p = one(2.0);
        let mut st = OptimizerState::new([&p], 1e-3);
        let err = st
            .step(&AdamW::default(), vec![("emb".into(), &mut p)], &[one(f64::NAN)])
            .unwrap_err();
        assert!(err.to_string().contains("emb"));
        assert_eq!(st.step, 0);
        assert_eq!(p.data()[0], 2.0);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g: Vec<Tensor<f64>> = vec![Tensor::from_f64(&[2], &[3.0, 4.0]).unwrap()];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-15);
    }
}
