use super::params::HyperbolicParams;
use super::BlockConfig;
use crate::error::{shape_err, Result};
use crate::manifolds::ops;
use crate::scalar::Real;
use crate::tensor::{Graph, Var};

pub struct HyperbolicOutput {
    pub y: Var,
    /// attention weights `[B, N, N]`
    pub attention: Var,
    /// projected queries and values on the ball, `[B, N, d]`
    pub queries: Var,
    pub values: Var,
    /// Möbius-weighted aggregate after projection, `[B, N, d]`
    pub aggregate: Var,
}

/// Attention on the Poincaré ball.
///
/// Queries and values are mapped into the ball with `exp0` and projected.
/// Weights are a row softmax of negative pairwise distances between
/// queries. Each output token is the projected ambient sum of
/// `A_ij ⊙ v_j` (Möbius scalar multiples), mapped back with `log0` and
/// passed through the feed-forward.
pub fn hyperbolic_branch<T: Real>(
    g: &mut Graph<T>,
    x: Var,
    p: &HyperbolicParams<Var>,
    cfg: &BlockConfig,
) -> Result<HyperbolicOutput> {
    let s = g.shape(x).to_vec();
    if s.len() != 3 || s[2] != cfg.d {
        return Err(shape_err!("hyperbolic branch expects [B, N, {}], got {s:?}", cfg.d));
    }
    let (b, n, d) = (s[0], s[1], s[2]);
    let c = T::lit(cfg.curvature);

    let q = g.matmul(x, p.w_q)?;
    let q = ops::exp0(g, q, c)?;
    let queries = ops::project_ball(g, q, c)?;
    let v = g.matmul(x, p.w_v)?;
    let v = ops::exp0(g, v, c)?;
    let values = ops::project_ball(g, v, c)?;

    // [b, i, j, :] = q_i and q_j respectively
    let qi = g.expand(queries, 2, n)?;
    let qj = g.expand(queries, 1, n)?;
    let dist = ops::poincare_distance(g, qi, qj, c)?;
    let dist = g.reshape(dist, &[b, n, n])?;
    let logits = g.scale(dist, -T::one());
    let attention = g.softmax(logits);

    let weights = g.reshape(attention, &[b, n, n, 1])?;
    let vj = g.expand(values, 1, n)?;
    let terms = ops::mobius_scalar_mul(g, weights, vj, c)?;
    let sum = g.sum_axis(terms, 2)?;
    let aggregate = ops::project_ball(g, sum, c)?;
    let tangent = ops::log0(g, aggregate, c)?;
    debug_assert_eq!(g.shape(tangent), [b, n, d]);
    let y = p.ff.forward(g, tangent, cfg)?;
    Ok(HyperbolicOutput {
        y,
        attention,
        queries,
        values,
        aggregate,
    })
}
