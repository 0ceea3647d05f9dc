//! Unit hypersphere with base point `μ` at the north pole (last coordinate).

use super::TangentVector;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::kernels::norm;

/// Unit-norm point (`|‖x‖ − 1| ≤ 1e-9`).
#[derive(Clone, Debug, PartialEq)]
pub struct SpherePoint<T> {
    coords: Vec<T>,
}

impl<T: Real> SpherePoint<T> {
    pub fn new(coords: Vec<T>) -> Result<Self> {
        if (norm(&coords) - T::one()).abs() > T::lit(1e-9) {
            return Err(Error::Domain(format!("norm {} is not 1", norm(&coords))));
        }
        Ok(Self { coords })
    }

    /// The north pole `(0, …, 0, 1)` of the sphere in `R^dim`.
    pub fn pole(dim: usize) -> Self {
        let mut coords = vec![T::zero(); dim];
        coords[dim - 1] = T::one();
        Self { coords }
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Exponential map at the pole: `cos(‖v‖)·μ + sin(‖v‖)·v/‖v‖`. `v` must be
/// orthogonal to the pole (last coordinate zero).
pub fn sphere_exp_mu<T: Real>(v: &TangentVector<T>) -> SpherePoint<T> {
    let n = v.norm();
    let dim = v.coords.len();
    if n == T::zero() {
        return SpherePoint::pole(dim);
    }
    let (sin, cos) = n.sin_cos();
    let mut coords: Vec<T> = v.coords.iter().map(|&x| sin * x / n).collect();
    coords[dim - 1] = coords[dim - 1] + cos;
    SpherePoint { coords }
}

/// Logarithmic map at the pole: `θ·u/‖u‖` where `u = x − ⟨μ,x⟩μ` and
/// `θ = atan2(‖u‖, ⟨μ,x⟩)` is the angle between `x` and `μ`.
pub fn sphere_log_mu<T: Real>(x: &SpherePoint<T>) -> Result<TangentVector<T>> {
    let dim = x.dim();
    let z = x.coords[dim - 1];
    let rho = norm(&x.coords[..dim - 1]);
    if rho == T::zero() {
        if z < T::zero() {
            return Err(Error::Domain("log map at the antipode of the pole".into()));
        }
        return Ok(TangentVector::zeros(dim));
    }
    let theta = rho.atan2(z);
    let mut coords: Vec<T> = x.coords.iter().map(|&v| theta * v / rho).collect();
    coords[dim - 1] = T::zero();
    Ok(TangentVector::new(coords))
}

/// `x / ‖x‖`.
pub fn sphere_project<T: Real>(x: &[T]) -> Result<SpherePoint<T>> {
    let n = norm(x);
    if n == T::zero() || !n.is_finite() {
        return Err(Error::Domain("cannot project a zero vector onto the sphere".into()));
    }
    Ok(SpherePoint {
        coords: x.iter().map(|&v| v / n).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_of_zero_is_the_pole() {
        let p = sphere_exp_mu(&TangentVector::<f64>::zeros(4));
        assert_eq!(p, SpherePoint::pole(4));
        assert_eq!(sphere_log_mu(&p).unwrap(), TangentVector::zeros(4));
    }

    #[test]
    fn antipode_is_a_domain_error() {
        let x = SpherePoint::new(vec![0.0, 0.0, -1.0]).unwrap();
        assert!(matches!(sphere_log_mu(&x), Err(Error::Domain(_))));
    }

    #[test]
    fn projection() {
        assert_eq!(sphere_project(&[0.0, 3.0]).unwrap().coords(), &[0.0, 1.0]);
        assert_eq!(sphere_project(&[0.6, 0.8]).unwrap().coords(), &[0.6, 0.8]);
        assert!(sphere_project::<f64>(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn quarter_turn() {
        let v = TangentVector::new(vec![std::f64::consts::FRAC_PI_2, 0.0, 0.0]);
        let x = sphere_exp_mu(&v);
        assert!((x.coords()[0] - 1.0).abs() < 1e-15);
        assert!(x.coords()[2].abs() < 1e-15);
    }
}
