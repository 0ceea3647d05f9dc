//! Differentiable manifold maps on a [`Graph`], applied to every row of the
//! last axis.

use super::kernels::RadialMap;
use crate::error::Result;
use crate::scalar::Real;
use crate::tensor::{Graph, Tensor, Var};

pub fn exp0<T: Real>(g: &mut Graph<T>, v: Var, c: T) -> Result<Var> {
    g.radial(v, RadialMap::Exp0 { c })
}

pub fn log0<T: Real>(g: &mut Graph<T>, x: Var, c: T) -> Result<Var> {
    g.radial(x, RadialMap::Log0 { c })
}

pub fn project_ball<T: Real>(g: &mut Graph<T>, x: Var, c: T) -> Result<Var> {
    g.radial(
        x,
        RadialMap::ProjectBall {
            c,
            eps: super::boundary_eps(),
        },
    )
}

/// Möbius addition built from primitive tape operations, then projected.
pub fn mobius_add<T: Real>(g: &mut Graph<T>, x: Var, y: Var, c: T) -> Result<Var> {
    let two_c = c + c;
    let xy = g.row_dot(x, y)?;
    let xx = g.row_dot(x, x)?;
    let yy = g.row_dot(y, y)?;

    // (1 + 2c⟨x,y⟩ + c‖y‖²)
    let a = g.scale(xy, two_c);
    let b = g.scale(yy, c);
    let cx = g.add(a, b)?;
    let cx = g.add_scalar(cx, T::one());
    // (1 − c‖x‖²)
    let cy = g.scale(xx, -c);
    let cy = g.add_scalar(cy, T::one());
    // 1 + 2c⟨x,y⟩ + c²‖x‖²‖y‖²
    let nn = g.mul(xx, yy)?;
    let nn = g.scale(nn, c * c);
    let den = g.add(a, nn)?;
    let den = g.add_scalar(den, T::one());

    let px = g.mul_col(x, cx)?;
    let py = g.mul_col(y, cy)?;
    let num = g.add(px, py)?;
    let ones = g.constant(Tensor::full(g.shape(den), T::one()));
    let inv = g.div(ones, den)?;
    let sum = g.mul_col(num, inv)?;
    project_ball(g, sum, c)
}

/// `r ⊙ x` with `r` of shape `[.., 1]`; no projection.
pub fn mobius_scalar_mul<T: Real>(g: &mut Graph<T>, r: Var, x: Var, c: T) -> Result<Var> {
    g.mobius_scale(r, x, c)
}

pub fn poincare_distance<T: Real>(g: &mut Graph<T>, x: Var, y: Var, c: T) -> Result<Var> {
    g.poincare_distance(x, y, c)
}

pub fn sphere_exp_mu<T: Real>(g: &mut Graph<T>, v: Var) -> Result<Var> {
    g.sphere_exp_mu(v)
}

pub fn sphere_log_mu<T: Real>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    g.sphere_log_mu(x)
}

pub fn sphere_project<T: Real>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    g.radial(x, RadialMap::SphereProject)
}
