//! Parameter layout of the block. Every struct is generic over the handle
//! type `P`: `Tensor<T>` for stored weights, [`Var`] once bound to a graph.

use rand::Rng;

use super::BlockConfig;
use crate::error::Result;
use crate::scalar::Real;
use crate::tensor::{xavier_uniform_with, Graph, Tensor, Var};

/// Flat, named traversal of a parameter structure in a fixed order.
pub trait ParamTree<P> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a P)>);
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut P)>);

    fn named(&self) -> Vec<(String, &P)> {
        let mut out = Vec::new();
        self.collect("", &mut out);
        out
    }

    fn named_mut(&mut self) -> Vec<(String, &mut P)> {
        let mut out = Vec::new();
        self.collect_mut("", &mut out);
        out
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Affine map `x·W + b` with `W` of shape `[in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<P> {
    pub weight: P,
    pub bias: Option<P>,
}

impl<P> Linear<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> Linear<Q> {
        Linear {
            weight: f(&self.weight),
            bias: self.bias.as_ref().map(&mut *f),
        }
    }
}

impl<P> ParamTree<P> for Linear<P> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a P)>) {
        out.push((join(prefix, "weight"), &self.weight));
        if let Some(b) = &self.bias {
            out.push((join(prefix, "bias"), b));
        }
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut P)>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        if let Some(b) = &mut self.bias {
            out.push((join(prefix, "bias"), b));
        }
    }
}

impl<T: Real> Linear<Tensor<T>> {
    pub fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, bias: bool, rng: &mut R) -> Result<Self> {
        Ok(Self {
            weight: xavier_uniform_with(&[fan_in, fan_out], rng)?,
            bias: bias.then(|| Tensor::zeros(&[fan_out])),
        })
    }
}

impl Linear<Var> {
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let y = g.matmul(x, self.weight)?;
        match self.bias {
            Some(b) => g.add_bias(y, b),
            None => Ok(y),
        }
    }
}

/// Two-layer perceptron `down(act(up(x)))`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedForward<P> {
    pub up: Linear<P>,
    pub down: Linear<P>,
}

impl<P> FeedForward<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> FeedForward<Q> {
        FeedForward {
            up: self.up.map(f),
            down: self.down.map(f),
        }
    }
}

impl<P> ParamTree<P> for FeedForward<P> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a P)>) {
        self.up.collect(&join(prefix, "up"), out);
        self.down.collect(&join(prefix, "down"), out);
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut P)>) {
        self.up.collect_mut(&join(prefix, "up"), out);
        self.down.collect_mut(&join(prefix, "down"), out);
    }
}

impl<T: Real> FeedForward<Tensor<T>> {
    pub fn init<R: Rng + ?Sized>(d_in: usize, hidden: usize, d_out: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            up: Linear::init(d_in, hidden, true, rng)?,
            down: Linear::init(hidden, d_out, true, rng)?,
        })
    }
}

impl FeedForward<Var> {
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, x: Var, cfg: &BlockConfig) -> Result<Var> {
        let h = self.up.forward(g, x)?;
        let h = g.activation(h, cfg.activation);
        self.down.forward(g, h)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNormParams<P> {
    pub gamma: P,
    pub beta: P,
}

impl<P> LayerNormParams<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> LayerNormParams<Q> {
        LayerNormParams {
            gamma: f(&self.gamma),
            beta: f(&self.beta),
        }
    }
}

impl<P> ParamTree<P> for LayerNormParams<P> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a P)>) {
        out.push((join(prefix, "gamma"), &self.gamma));
        out.push((join(prefix, "beta"), &self.beta));
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut P)>) {
        out.push((join(prefix, "gamma"), &mut self.gamma));
        out.push((join(prefix, "beta"), &mut self.beta));
    }
}

impl<T: Real> LayerNormParams<Tensor<T>> {
    pub fn init(d: usize) -> Self {
        Self {
            gamma: Tensor::full(&[d], T::one()),
            beta: Tensor::zeros(&[d]),
        }
    }
}

/// Multi-head attention projections, two layer norms and a feed-forward.
#[derive(Clone, Debug, PartialEq)]
pub struct EuclideanParams<P> {
    pub query: Linear<P>,
    pub key: Linear<P>,
    pub value: Linear<P>,
    pub output: Linear<P>,
    pub norm1: LayerNormParams<P>,
    pub norm2: LayerNormParams<P>,
    pub ff: FeedForward<P>,
}

impl<P> EuclideanParams<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> EuclideanParams<Q> {
        EuclideanParams {
            query: self.query.map(f),
            key: self.key.map(f),
            value: self.value.map(f),
            output: self.output.map(f),
            norm1: self.norm1.map(f),
            norm2: self.norm2.map(f),
            ff: self.ff.map(f),
        }
    }
}

impl<P> ParamTree<P> for EuclideanParams<P> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a P)>) {
        self.query.collect(&join(prefix, "query"), out);
        self.key.collect(&join(prefix, "key"), out);
        self.value.collect(&join(prefix, "value"), out);
        self.output.collect(&join(prefix, "output"), out);
        self.norm1.collect(&join(prefix, "norm1"), out);
        self.norm2.collect(&join(prefix, "norm2"), out);
        self.ff.collect(&join(prefix, "ff"), out);
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut P)>) {
        self.query.collect_mut(&join(prefix, "query"), out);
        self.key.collect_mut(&join(prefix, "key"), out);
        self.value.collect_mut(&join(prefix, "value"), out);
        self.output.collect_mut(&join(prefix, "output"), out);
        self.norm1.collect_mut(&join(prefix, "norm1"), out);
        self.norm2.collect_mut(&join(prefix, "norm2"), out);
        self.ff.collect_mut(&join(prefix, "ff"), out);
    }
}

impl<T: Real> EuclideanParams<Tensor<T>> {
    pub fn init<R: Rng + ?Sized>(cfg: &BlockConfig, rng: &mut R) -> Result<Self> {
        let d = cfg.d;
        Ok(Self {
            query: Linear::init(d, d, true, rng)?,
            key: Linear::init(d, d, true, rng)?,
            value: Linear::init(d, d, true, rng)?,
            output: Linear::init(d, d, true, rng)?,
            norm1: LayerNormParams::init(d),
            norm2: LayerNormParams::init(d),
            ff: FeedForward::init(d, cfg.ff_hidden(), d, rng)?,
        })
    }
}

/// Bias-free query/value maps into the ball and a feed-forward on the
/// log-mapped output.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperbolicParams<P> {
    pub w_q: P,
    pub w_v: P,
    pub ff: FeedForward<P>,
}

impl<P> HyperbolicParams<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> HyperbolicParams<Q> {
        HyperbolicParams {
            w_q: f(&self.w_q),
            w_v: f(&self.w_v),
            ff: self.ff.map(f),
        }
    }
}

impl<P> ParamTree<P> for HyperbolicParams<P> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a P)>) {
        out.push((join(prefix, "w_q"), &self.w_q));
        out.push((join(prefix, "w_v"), &self.w_v));
        self.ff.collect(&join(prefix, "ff"), out);
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut P)>) {
        out.push((join(prefix, "w_q"), &mut self.w_q));
        out.push((join(prefix, "w_v"), &mut self.w_v));
        self.ff.collect_mut(&join(prefix, "ff"), out);
    }
}

impl<T: Real> HyperbolicParams<Tensor<T>> {
    pub fn init<R: Rng + ?Sized>(cfg: &BlockConfig, rng: &mut R) -> Result<Self> {
        let d = cfg.d;
        Ok(Self {
            w_q: xavier_uniform_with(&[d, d], rng)?,
            w_v: xavier_uniform_with(&[d, d], rng)?,
            ff: FeedForward::init(d, cfg.ff_hidden(), d, rng)?,
        })
    }
}

/// Feed-forward from the `(d+1)`-dimensional tangent space at the pole back to `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct SphericalParams<P> {
    pub ff: FeedForward<P>,
}

impl<P> SphericalParams<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> SphericalParams<Q> {
        SphericalParams { ff: self.ff.map(f) }
    }
}

impl<P> ParamTree<P> for SphericalParams<P> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a P)>) {
        self.ff.collect(&join(prefix, "ff"), out);
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut P)>) {
        self.ff.collect_mut(&join(prefix, "ff"), out);
    }
}

impl<T: Real> SphericalParams<Tensor<T>> {
    pub fn init<R: Rng + ?Sized>(cfg: &BlockConfig, rng: &mut R) -> Result<Self> {
        Ok(Self {
            ff: FeedForward::init(cfg.d + 1, cfg.ff_hidden(), cfg.d, rng)?,
        })
    }
}

/// Routing MLP `d -> d -> 3`.
#[derive(Clone, Debug, PartialEq)]
pub struct RouterParams<P> {
    pub hidden: Linear<P>,
    pub out: Linear<P>,
}

impl<P> RouterParams<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> RouterParams<Q> {
        RouterParams {
            hidden: self.hidden.map(f),
            out: self.out.map(f),
        }
    }
}

impl<P> ParamTree<P> for RouterParams<P> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a P)>) {
        self.hidden.collect(&join(prefix, "hidden"), out);
        self.out.collect(&join(prefix, "out"), out);
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut P)>) {
        self.hidden.collect_mut(&join(prefix, "hidden"), out);
        self.out.collect_mut(&join(prefix, "out"), out);
    }
}

impl<T: Real> RouterParams<Tensor<T>> {
    pub fn init<R: Rng + ?Sized>(cfg: &BlockConfig, rng: &mut R) -> Result<Self> {
        Ok(Self {
            hidden: Linear::init(cfg.d, cfg.router_hidden(), true, rng)?,
            out: Linear::init(cfg.router_hidden(), super::GEOMETRIES, true, rng)?,
        })
    }
}

/// All block parameters. Fixed-geometry variants hold exactly one branch and
/// no router.
#[derive(Clone, Debug, PartialEq)]
pub struct CatBlockParams<P> {
    pub euclidean: Option<EuclideanParams<P>>,
    pub hyperbolic: Option<HyperbolicParams<P>>,
    pub spherical: Option<SphericalParams<P>>,
    pub router: Option<RouterParams<P>>,
}

impl<P> CatBlockParams<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> CatBlockParams<Q> {
        CatBlockParams {
            euclidean: self.euclidean.as_ref().map(|p| p.map(f)),
            hyperbolic: self.hyperbolic.as_ref().map(|p| p.map(f)),
            spherical: self.spherical.as_ref().map(|p| p.map(f)),
            router: self.router.as_ref().map(|p| p.map(f)),
        }
    }
}

impl<P> ParamTree<P> for CatBlockParams<P> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a P)>) {
        if let Some(p) = &self.euclidean {
            p.collect(&join(prefix, "euclidean"), out);
        }
        if let Some(p) = &self.hyperbolic {
            p.collect(&join(prefix, "hyperbolic"), out);
        }
        if let Some(p) = &self.spherical {
            p.collect(&join(prefix, "spherical"), out);
        }
        if let Some(p) = &self.router {
            p.collect(&join(prefix, "router"), out);
        }
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut P)>) {
        if let Some(p) = &mut self.euclidean {
            p.collect_mut(&join(prefix, "euclidean"), out);
        }
        if let Some(p) = &mut self.hyperbolic {
            p.collect_mut(&join(prefix, "hyperbolic"), out);
        }
        if let Some(p) = &mut self.spherical {
            p.collect_mut(&join(prefix, "spherical"), out);
        }
        if let Some(p) = &mut self.router {
            p.collect_mut(&join(prefix, "router"), out);
        }
    }
}

impl<T: Real> CatBlockParams<Tensor<T>> {
    /// Random initialization: Xavier weights, zero biases, unit layer-norm gains.
    pub fn init<R: Rng + ?Sized>(cfg: &BlockConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let v = cfg.variant;
        Ok(Self {
            euclidean: v.has_euclidean().then(|| EuclideanParams::init(cfg, rng)).transpose()?,
            hyperbolic: v.has_hyperbolic().then(|| HyperbolicParams::init(cfg, rng)).transpose()?,
            spherical: v.has_spherical().then(|| SphericalParams::init(cfg, rng)).transpose()?,
            router: v.is_routed().then(|| RouterParams::init(cfg, rng)).transpose()?,
        })
    }

    /// Registers every tensor as a tracked leaf on `g`.
    pub fn bind(&self, g: &mut Graph<T>) -> CatBlockParams<Var> {
        self.map(&mut |t| g.param(t.clone()))
    }

    pub fn num_params(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }
}
