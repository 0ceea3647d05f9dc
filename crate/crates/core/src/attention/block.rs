use super::euclidean::{euclidean_branch, EuclideanOutput};
use super::hyperbolic::{hyperbolic_branch, HyperbolicOutput};
use super::params::{CatBlockParams, RouterParams};
use super::spherical::{spherical_branch, SphericalOutput};
use super::{BlockConfig, GEOMETRIES};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{Graph, Var};

/// Routing weights `α = softmax(MLP(x))`, shape `[B, N, 3]`, ordered
/// (Euclidean, hyperbolic, spherical).
pub fn route<T: Real>(g: &mut Graph<T>, x: Var, p: &RouterParams<Var>, cfg: &BlockConfig) -> Result<Var> {
    let h = p.hidden.forward(g, x)?;
    let h = g.activation(h, cfg.activation);
    let logits = p.out.forward(g, h)?;
    Ok(g.softmax(logits))
}

pub struct BlockOutput {
    pub y: Var,
    /// routing weights `[B, N, 3]`; `None` for fixed-geometry variants
    pub alpha: Option<Var>,
    pub euclidean: Option<EuclideanOutput>,
    pub hyperbolic: Option<HyperbolicOutput>,
    pub spherical: Option<SphericalOutput>,
}

/// Evaluates every branch present in `p` on `x` and, when a router is
/// present, mixes them token-wise: `Y = Σ_g α_g ⊙ Y_g`.
pub fn cat_block<T: Real>(g: &mut Graph<T>, x: Var, p: &CatBlockParams<Var>, cfg: &BlockConfig) -> Result<BlockOutput> {
    let euclidean = p.euclidean.as_ref().map(|e| euclidean_branch(g, x, e, cfg)).transpose()?;
    let hyperbolic = p.hyperbolic.as_ref().map(|h| hyperbolic_branch(g, x, h, cfg)).transpose()?;
    let spherical = p.spherical.as_ref().map(|s| spherical_branch(g, x, s, cfg)).transpose()?;
    let branches = [
        euclidean.as_ref().map(|o| o.y),
        hyperbolic.as_ref().map(|o| o.y),
        spherical.as_ref().map(|o| o.y),
    ];

    let (y, alpha) = match &p.router {
        Some(router) => {
            let alpha = route(g, x, router, cfg)?;
            let mut acc: Option<Var> = None;
            for (gi, branch) in branches.iter().enumerate().take(GEOMETRIES) {
                let Some(yb) = branch else {
                    return Err(Error::InvalidConfig("routed block needs all three branches".into()));
                };
                let w = g.column(alpha, gi)?;
                let term = g.mul_col(*yb, w)?;
                acc = Some(match acc {
                    Some(a) => g.add(a, term)?,
                    None => term,
                });
            }
            (acc.expect("three branches"), Some(alpha))
        }
        None => {
            let mut present = branches.iter().flatten();
            match (present.next(), present.next()) {
                (Some(&y), None) => (y, None),
                _ => {
                    return Err(Error::InvalidConfig(
                        "an unrouted block must contain exactly one branch".into(),
                    ))
                }
            }
        }
    };
    Ok(BlockOutput {
        y,
        alpha,
        euclidean,
        hyperbolic,
        spherical,
    })
}
