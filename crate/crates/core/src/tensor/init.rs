use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::error::{shape_err, Result};
use crate::scalar::Real;

/// Xavier/Glorot uniform initialization for a rank-2 shape `(fan_in, fan_out)`
/// or an embedding table `(rows, dim)`: entries uniform on `[-a, a]` with
/// `a = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<T: Real>(shape: &[usize], seed: u64) -> Result<Tensor<T>> {
    xavier_uniform_with(shape, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn xavier_uniform_with<T: Real, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Result<Tensor<T>> {
    let &[fan_in, fan_out] = shape else {
        return Err(shape_err!("xavier init needs a rank-2 shape, got {shape:?}"));
    };
    if fan_in == 0 || fan_out == 0 {
        return Err(shape_err!("xavier init on zero-sized shape {shape:?}"));
    }
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-a, a);
    let data = (0..fan_in * fan_out).map(|_| T::lit(dist.sample(rng))).collect();
    Tensor::new(shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_entry_respects_bound() {
        for seed in 0..50 {
            let t: Tensor<f64> = xavier_uniform(&[1, 1], seed).unwrap();
            assert!(t.data()[0].abs() <= 3f64.sqrt());
        }
    }

    #[test]
    fn mean_is_near_zero() {
        // 4096 draws from U[-a, a] with a = sqrt(6/128): sd of the mean is
        // a / sqrt(3 * 4096) ~ 0.002, so 0.02 is a ten-sigma band
        let t: Tensor<f64> = xavier_uniform(&[64, 64], 7).unwrap();
        let mean = t.data().iter().sum::<f64>() / 4096.0;
        assert!(mean.abs() < 0.02, "mean {mean}");
        let a = (6.0f64 / 128.0).sqrt();
        assert!(t.data().iter().all(|v| v.abs() <= a));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a: Tensor<f64> = xavier_uniform(&[8, 5], 3).unwrap();
        let b: Tensor<f64> = xavier_uniform(&[8, 5], 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_dim_is_rejected() {
        assert!(xavier_uniform::<f64>(&[0, 4], 1).is_err());
        assert!(xavier_uniform::<f64>(&[4], 1).is_err());
    }
}
