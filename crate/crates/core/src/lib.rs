//! Curvature-adaptive attention with Euclidean, Poincaré-ball and spherical
//! branches mixed by a learned per-token router, and a knowledge-graph
//! link-prediction trainer built around it.
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the 64-bit instantiation used for training.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod error;
pub mod kg;
pub mod manifolds;
pub mod scalar;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Graph64 = tensor::Graph<f64>;
pub type PoincarePoint64 = manifolds::PoincarePoint<f64>;
pub type SpherePoint64 = manifolds::SpherePoint<f64>;
pub type CatBlockParams64 = attention::CatBlockParams<tensor::Tensor<f64>>;
pub type KgModel64 = kg::KgModel<f64>;
pub type KgModel32 = kg::KgModel<f32>;
