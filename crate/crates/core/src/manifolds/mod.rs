//! Poincaré-ball and unit-sphere primitives.
//!
//! [`poincare`] and [`sphere`] work on plain coordinate vectors with typed
//! points that keep their norm invariants. [`ops`] provides the same maps as
//! differentiable graph operations, applied row-wise over the last axis.

pub mod kernels;
pub mod ops;
pub mod poincare;
pub mod sphere;

pub use kernels::RadialMap;
pub use poincare::{exp0, project_ball, PoincarePoint};
pub use sphere::{sphere_exp_mu, sphere_log_mu, sphere_project, SpherePoint};

use crate::scalar::Real;

/// Margin kept between projected points and the ball boundary, in units of
/// the ball radius.
pub const BOUNDARY_EPS: f64 = 1e-5;

pub fn boundary_eps<T: Real>() -> T {
    T::lit(BOUNDARY_EPS)
}

/// Coordinates of a tangent vector (at the ball origin or the sphere pole).
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector<T> {
    pub coords: Vec<T>,
}

impl<T: Real> TangentVector<T> {
    pub fn new(coords: Vec<T>) -> Self {
        Self { coords }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            coords: vec![T::zero(); dim],
        }
    }

    pub fn norm(&self) -> T {
        crate::tensor::kernels::norm(&self.coords)
    }
}
