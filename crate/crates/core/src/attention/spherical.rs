use super::params::SphericalParams;
use super::BlockConfig;
use crate::error::{shape_err, Result};
use crate::manifolds::ops;
use crate::scalar::Real;
use crate::tensor::{Graph, Var};

pub struct SphericalOutput {
    pub y: Var,
    /// attention weights `[B, N, N]`
    pub attention: Var,
    /// tokens on the sphere, `[B, N, d + 1]`
    pub points: Var,
}

/// Attention on the unit sphere `S^d ⊂ R^{d+1}`.
///
/// Tokens are lifted to `[x; 0]` and mapped onto the sphere with the
/// exponential map at the pole. Weights are a row softmax of the Gram
/// matrix of the sphere points; the weighted sum is renormalized onto the
/// sphere, mapped back with the log map at the pole and sent through a
/// feed-forward from `d + 1` to `d` dimensions.
pub fn spherical_branch<T: Real>(
    g: &mut Graph<T>,
    x: Var,
    p: &SphericalParams<Var>,
    cfg: &BlockConfig,
) -> Result<SphericalOutput> {
    let s = g.shape(x);
    if s.len() != 3 || s[2] != cfg.d {
        return Err(shape_err!("spherical branch expects [B, N, {}], got {s:?}", cfg.d));
    }
    let lifted = g.lift_zero(x)?;
    let points = ops::sphere_exp_mu(g, lifted)?;
    let gram = g.matmul_nt(points, points)?;
    let attention = g.softmax(gram);
    let mixed = g.matmul(attention, points)?;
    let mixed = ops::sphere_project(g, mixed)?;
    let tangent = ops::sphere_log_mu(g, mixed)?;
    let y = p.ff.forward(g, tangent, cfg)?;
    Ok(SphericalOutput { y, attention, points })
}
