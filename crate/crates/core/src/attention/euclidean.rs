use super::params::EuclideanParams;
use super::BlockConfig;
use crate::error::{shape_err, Error, Result};
use crate::scalar::Real;
use crate::tensor::{Graph, Var};

pub struct EuclideanOutput {
    pub y: Var,
    /// attention weights `[B, heads, N, N]`
    pub attention: Var,
}

/// Standard transformer layer: multi-head scaled dot-product attention,
/// residual + layer norm, feed-forward, residual + layer norm.
pub fn euclidean_branch<T: Real>(
    g: &mut Graph<T>,
    x: Var,
    p: &EuclideanParams<Var>,
    cfg: &BlockConfig,
) -> Result<EuclideanOutput> {
    let s = g.shape(x);
    if s.len() != 3 || s[2] != cfg.d {
        return Err(shape_err!("euclidean branch expects [B, N, {}], got {s:?}", cfg.d));
    }
    if cfg.heads == 0 || !cfg.d.is_multiple_of(cfg.heads) {
        return Err(Error::InvalidConfig(format!(
            "model width {} not divisible by {} heads",
            cfg.d, cfg.heads
        )));
    }
    let dk = cfg.d / cfg.heads;

    let q = p.query.forward(g, x)?;
    let k = p.key.forward(g, x)?;
    let v = p.value.forward(g, x)?;
    let q = g.split_heads(q, cfg.heads)?;
    let k = g.split_heads(k, cfg.heads)?;
    let v = g.split_heads(v, cfg.heads)?;

    let scores = g.matmul_nt(q, k)?;
    let scores = g.scale(scores, T::lit(1.0 / (dk as f64).sqrt()));
    let attention = g.softmax(scores);
    let ctx = g.matmul(attention, v)?;
    let ctx = g.merge_heads(ctx)?;
    let z = p.output.forward(g, ctx)?;

    let eps = T::lit(cfg.layer_norm_eps);
    let res = g.add(x, z)?;
    let h = g.layer_norm(res, p.norm1.gamma, p.norm1.beta, eps)?;
    let f = p.ff.forward(g, h, cfg)?;
    let res = g.add(h, f)?;
    let y = g.layer_norm(res, p.norm2.gamma, p.norm2.beta, eps)?;
    Ok(EuclideanOutput { y, attention })
}
