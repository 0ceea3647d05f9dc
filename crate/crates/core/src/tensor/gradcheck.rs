//! Central finite-difference verification of tape gradients.

use super::{Graph, Tensor, Var};
use crate::error::Result;
use crate::scalar::Real;

/// Outcome of [`grad_check`].
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// max over entries of `|analytic − numeric| / max(1, |numeric|)`;
    /// infinite when the check could not be completed
    pub max_rel_error: f64,
    /// `(input index, flat entry)` of the worst entry
    pub worst: Option<(usize, usize)>,
    /// set when the function failed or produced a non-finite value
    pub failure: Option<String>,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.failure.is_none() && self.max_rel_error <= tol
    }

    fn failed(msg: String) -> Self {
        Self {
            max_rel_error: f64::INFINITY,
            worst: None,
            failure: Some(msg),
        }
    }
}

fn eval<T: Real, F>(f: &F, inputs: &[Tensor<T>], track: bool) -> Result<(Graph<T>, Vec<Var>, Var)>
where
    F: Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| if track { g.param(t.clone()) } else { g.constant(t.clone()) })
        .collect();
    let out = f(&mut g, &vars)?;
    Ok((g, vars, out))
}

fn scalar_value<T: Real, F>(f: &F, inputs: &[Tensor<T>]) -> std::result::Result<T, String>
where
    F: Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
{
    let (g, _, out) = eval(f, inputs, false).map_err(|e| e.to_string())?;
    let v = g.value(out).item().map_err(|e| e.to_string())?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite function value {v}"))
    }
}

/// Compares reverse-mode gradients of the scalar function `f` against
/// central differences with the given `step`, over every entry of every
/// input.
pub fn grad_check<T: Real, F>(f: F, inputs: &[Tensor<T>], step: T) -> GradCheckReport
where
    F: Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
{
    let (graph, vars, out) = match eval(&f, inputs, true) {
        Ok(r) => r,
        Err(e) => return GradCheckReport::failed(e.to_string()),
    };
    if !graph.value(out).is_finite() {
        return GradCheckReport::failed("non-finite function value".into());
    }
    let grads = match graph.backward(out) {
        Ok(g) => g,
        Err(e) => return GradCheckReport::failed(e.to_string()),
    };

    let mut worst = 0.0_f64;
    let mut worst_at = None;
    let mut probe = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).expect("tracked leaf").clone();
        if !analytic.is_finite() {
            return GradCheckReport::failed(format!("non-finite gradient for input {i}"));
        }
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            probe[i].data_mut()[j] = orig + step;
            let plus = scalar_value(&f, &probe);
            probe[i].data_mut()[j] = orig - step;
            let minus = scalar_value(&f, &probe);
            probe[i].data_mut()[j] = orig;
            let (plus, minus) = match (plus, minus) {
                (Ok(p), Ok(m)) => (p, m),
                (Err(e), _) | (_, Err(e)) => return GradCheckReport::failed(e),
            };
            let numeric = ((plus - minus) / (step + step)).as_f64();
            let err = (analytic.data()[j].as_f64() - numeric).abs() / numeric.abs().max(1.0);
            if err > worst || worst_at.is_none() {
                worst = worst.max(err);
                worst_at = Some((i, j));
            }
        }
    }
    GradCheckReport {
        max_rel_error: worst,
        worst: worst_at,
        failure: None,
    }
}
