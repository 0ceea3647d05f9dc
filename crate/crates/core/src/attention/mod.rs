//! Geometry-specific attention branches and the routed block that mixes them.
//!
//! Inputs are `[B, N, d]` token batches. Each branch maps them to `[B, N, d]`;
//! the router produces per-token weights over the three geometries and the
//! block returns their convex combination.

mod block;
mod euclidean;
mod hyperbolic;
pub mod params;
mod spherical;

pub use block::{cat_block, route, BlockOutput};
pub use euclidean::{euclidean_branch, EuclideanOutput};
pub use hyperbolic::{hyperbolic_branch, HyperbolicOutput};
pub use params::{
    CatBlockParams, EuclideanParams, FeedForward, HyperbolicParams, LayerNormParams, Linear, ParamTree,
    RouterParams, SphericalParams,
};
pub use spherical::{spherical_branch, SphericalOutput};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Activation;

/// Number of geometries the router chooses between (Euclidean, hyperbolic, spherical).
pub const GEOMETRIES: usize = 3;

/// Which branches a block contains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// all three branches mixed by the router
    #[default]
    Cat,
    Euclidean,
    Hyperbolic,
    Spherical,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Cat,
        Variant::Euclidean,
        Variant::Hyperbolic,
        Variant::Spherical,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Cat => "cat",
            Variant::Euclidean => "euclidean",
            Variant::Hyperbolic => "hyperbolic",
            Variant::Spherical => "spherical",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant '{s}'")))
    }

    pub fn is_routed(self) -> bool {
        self == Variant::Cat
    }

    pub fn has_euclidean(self) -> bool {
        matches!(self, Variant::Cat | Variant::Euclidean)
    }

    pub fn has_hyperbolic(self) -> bool {
        matches!(self, Variant::Cat | Variant::Hyperbolic)
    }

    pub fn has_spherical(self) -> bool {
        matches!(self, Variant::Cat | Variant::Spherical)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Architecture hyperparameters of one block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub variant: Variant,
    /// model width
    pub d: usize,
    /// Euclidean attention heads
    pub heads: usize,
    /// feed-forward hidden width as a multiple of `d`
    pub ff_multiplier: usize,
    /// ball curvature `c` (the ball has curvature `-c`)
    pub curvature: f64,
    pub activation: Activation,
    pub layer_norm_eps: f64,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Cat,
            d: 64,
            heads: 4,
            ff_multiplier: 2,
            curvature: 1.0,
            activation: Activation::Gelu,
            layer_norm_eps: 1e-5,
        }
    }
}

impl BlockConfig {
    pub fn ff_hidden(&self) -> usize {
        self.ff_multiplier * self.d
    }

    pub fn router_hidden(&self) -> usize {
        self.d
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.heads == 0 || self.ff_multiplier == 0 {
            return Err(Error::InvalidConfig(format!(
                "d={}, heads={}, ff_multiplier={} must be positive",
                self.d, self.heads, self.ff_multiplier
            )));
        }
        if !self.d.is_multiple_of(self.heads) {
            return Err(Error::InvalidConfig(format!(
                "model width {} not divisible by {} heads",
                self.d, self.heads
            )));
        }
        if !(self.curvature > 0.0 && self.curvature.is_finite()) {
            return Err(Error::InvalidConfig(format!("curvature {} must be positive", self.curvature)));
        }
        if !(self.layer_norm_eps > 0.0) {
            return Err(Error::InvalidConfig("layer_norm_eps must be positive".into()));
        }
        Ok(())
    }
}
