//! Poincaré ball `{x : ‖x‖ < 1/√c}` of constant curvature `-c`.

use super::{boundary_eps, kernels::{artanh, boundary_slack}, TangentVector};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::kernels::{dot, norm};

/// Point strictly inside the ball: `√c‖x‖ ≤ 1 − BOUNDARY_EPS`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoincarePoint<T> {
    coords: Vec<T>,
    c: T,
}

fn check_curvature<T: Real>(c: T) -> Result<()> {
    if c > T::zero() && c.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("curvature must be positive, got {c}")))
    }
}

impl<T: Real> PoincarePoint<T> {
    /// Wraps coordinates that already satisfy the interior invariant.
    pub fn new(coords: Vec<T>, c: T) -> Result<Self> {
        check_curvature(c)?;
        let limit = T::one() - boundary_eps::<T>();
        if c.sqrt() * norm(&coords) > limit * boundary_slack() {
            return Err(Error::Domain(format!(
                "point of norm {} outside the ball of curvature {c}",
                norm(&coords)
            )));
        }
        Ok(Self { coords, c })
    }

    pub fn origin(dim: usize, c: T) -> Self {
        Self {
            coords: vec![T::zero(); dim],
            c,
        }
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn curvature(&self) -> T {
        self.c
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn norm(&self) -> T {
        norm(&self.coords)
    }

    pub fn neg(&self) -> Self {
        Self {
            coords: self.coords.iter().map(|&v| -v).collect(),
            c: self.c,
        }
    }

    fn same_ball(&self, other: &Self) -> Result<()> {
        if self.c != other.c {
            return Err(Error::InvalidConfig(format!(
                "curvature mismatch: {} vs {}",
                self.c, other.c
            )));
        }
        if self.dim() != other.dim() {
            return Err(Error::InvalidShape(format!(
                "dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }

    /// Möbius addition `self ⊕ other`, projected back into the ball.
    pub fn mobius_add(&self, other: &Self) -> Result<Self> {
        self.same_ball(other)?;
        Ok(project_ball(&mobius_add_raw(&self.coords, &other.coords, self.c), self.c))
    }

    /// Möbius scalar multiplication `r ⊙ self`.
    pub fn mobius_scalar_mul(&self, r: T) -> Self {
        let n = self.norm();
        if n == T::zero() {
            return Self::origin(self.dim(), self.c);
        }
        let s = self.c.sqrt();
        let scale = (r * artanh((s * n).min(super::kernels::artanh_cap()))).tanh() / (s * n);
        project_ball(&self.coords.iter().map(|&v| scale * v).collect::<Vec<_>>(), self.c)
    }

    /// Geodesic distance `(2/√c)·artanh(√c‖(−x) ⊕ y‖)`.
    pub fn distance(&self, other: &Self) -> Result<T> {
        self.same_ball(other)?;
        let neg: Vec<T> = self.coords.iter().map(|&v| -v).collect();
        let diff = mobius_add_raw(&neg, &other.coords, self.c);
        let s = self.c.sqrt();
        let u = (s * norm(&diff)).min(super::kernels::artanh_cap());
        Ok(T::lit(2.0) / s * artanh(u))
    }

    /// Logarithmic map at the origin: `artanh(√c‖x‖)·x/(√c‖x‖)`.
    pub fn log0(&self) -> TangentVector<T> {
        let n = self.norm();
        if n == T::zero() {
            return TangentVector::zeros(self.dim());
        }
        let u = self.c.sqrt() * n;
        let scale = artanh(u.min(super::kernels::artanh_cap())) / u;
        TangentVector::new(self.coords.iter().map(|&v| scale * v).collect())
    }
}

/// Möbius addition without the final projection.
pub(crate) fn mobius_add_raw<T: Real>(x: &[T], y: &[T], c: T) -> Vec<T> {
    let two = T::lit(2.0);
    let xy = dot(x, y);
    let xx = dot(x, x);
    let yy = dot(y, y);
    let cx = T::one() + two * c * xy + c * yy;
    let cy = T::one() - c * xx;
    let den = T::one() + two * c * xy + c * c * xx * yy;
    x.iter().zip(y).map(|(&a, &b)| (cx * a + cy * b) / den).collect()
}

/// Exponential map at the origin, `tanh(√c‖v‖)·v/(√c‖v‖)`, projected into the ball.
pub fn exp0<T: Real>(v: &TangentVector<T>, c: T) -> PoincarePoint<T> {
    let n = v.norm();
    if n == T::zero() {
        return PoincarePoint::origin(v.coords.len(), c);
    }
    let u = c.sqrt() * n;
    let scale = u.tanh() / u;
    project_ball(&v.coords.iter().map(|&x| scale * x).collect::<Vec<_>>(), c)
}

/// Rescales `x` onto radius `(1 − BOUNDARY_EPS)/√c` when it lies beyond it.
pub fn project_ball<T: Real>(x: &[T], c: T) -> PoincarePoint<T> {
    let limit = (T::one() - boundary_eps::<T>()) / c.sqrt();
    let n = norm(x);
    let coords = if n > limit * boundary_slack() {
        x.iter().map(|&v| v * (limit / n)).collect()
    } else {
        x.to_vec()
    };
    PoincarePoint { coords, c }
}
