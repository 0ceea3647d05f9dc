use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernels::{self, dot, log_sum_exp, row_stats, softmax_row};
use super::Tensor;
use crate::error::{shape_err, Error, Result};
use crate::manifolds::kernels as mk;
use crate::manifolds::kernels::RadialMap;
use crate::scalar::Real;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Smooth nonlinearity used by feed-forward layers and the router.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// tanh approximation of GELU
    #[default]
    Gelu,
    Tanh,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Gelu => "gelu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gelu" => Some(Activation::Gelu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }

    pub(crate) fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Gelu => {
                let u = gelu_inner(x);
                T::lit(0.5) * x * (T::one() + u.tanh())
            }
            Activation::Tanh => x.tanh(),
        }
    }

    pub(crate) fn derivative<T: Real>(self, x: T) -> T {
        match self {
            Activation::Gelu => {
                let t = gelu_inner(x).tanh();
                let du = T::lit(GELU_K) * (T::one() + T::lit(3.0 * GELU_C) * x * x);
                T::lit(0.5) * (T::one() + t) + T::lit(0.5) * x * (T::one() - t * t) * du
            }
            Activation::Tanh => {
                let t = x.tanh();
                T::one() - t * t
            }
        }
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

fn gelu_inner<T: Real>(x: T) -> T {
    T::lit(GELU_K) * (x + T::lit(GELU_C) * x * x * x)
}

#[derive(Clone, Debug)]
pub(crate) enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddBias(Var, Var),
    MulCol(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    /// `a[batch.., m, k] · op(b)`; `b` is shared (rank 2) or batched like `a`.
    Matmul {
        a: Var,
        b: Var,
        trans_b: bool,
        batched: bool,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    SplitHeads(Var),
    MergeHeads(Var, usize),
    Reshape(Var),
    Expand {
        x: Var,
        outer: usize,
        count: usize,
        inner: usize,
    },
    SumAxis {
        x: Var,
        outer: usize,
        count: usize,
        inner: usize,
    },
    SumAll(Var),
    MeanAll(Var),
    RowDot(Var, Var),
    Column(Var, usize),
    LiftZero(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        stats: Vec<(T, T)>,
    },
    Act(Var, Activation),
    Dropout(Var, Vec<T>),
    Gather(Var, Vec<usize>),
    Radial(Var, RadialMap<T>),
    SphereExpMu(Var),
    SphereLogMu(Var),
    MobiusScale {
        r: Var,
        x: Var,
        c: T,
    },
    PoincareDist {
        x: Var,
        y: Var,
        c: T,
    },
    SmoothedCe {
        logits: Var,
        targets: Vec<usize>,
        eps: T,
    },
    Entropy(Var),
}

#[derive(Clone, Debug)]
pub(crate) struct Node<T> {
    pub value: Tensor<T>,
    pub op: Op<T>,
    /// true when a tracked leaf is reachable from this node
    pub tracked: bool,
}

/// Tape of executed operations. Nodes are appended in execution order, so
/// every node follows the nodes producing its inputs.
#[derive(Clone, Debug, Default)]
pub struct Graph<T> {
    pub(crate) nodes: Vec<Node<T>>,
}

/// Gradients of a scalar with respect to the tracked leaves of a graph.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    pub(crate) grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient for a tracked leaf; `None` for untracked nodes.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn same_shape<T: Real>(a: &Tensor<T>, b: &Tensor<T>, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err!("{op}: {:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

/// Shape with the last axis replaced by 1.
fn col_shape(shape: &[usize]) -> Vec<usize> {
    let mut s = shape.to_vec();
    match s.last_mut() {
        Some(l) => *l = 1,
        None => s.push(1),
    }
    s
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let tracked = inputs.iter().any(|i| self.nodes[i.0].tracked);
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    /// Leaf whose gradient is reported by [`Graph::backward`].
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            tracked: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            tracked: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn zip_with(&mut self, a: Var, b: Var, name: &str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(ta, tb, name)?;
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "add", |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    /// Elementwise quotient.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "div", |x, y| x / y)?;
        Ok(self.push(t, Op::Div(a, b), &[a, b]))
    }

    /// `x[.., n] + bias[n]`
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tb.rank() != 1 || tb.len() != tx.last_dim() {
            return Err(shape_err!("add_bias: {:?} + {:?}", tx.shape(), tb.shape()));
        }
        let b = tb.data();
        let data = tx
            .rows()
            .flat_map(|r| r.iter().zip(b).map(|(&v, &bv)| v + bv))
            .collect();
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(t, Op::AddBias(x, bias), &[x, bias]))
    }

    /// `x[.., n] * col[.., 1]`, broadcasting the column over the last axis.
    pub fn mul_col(&mut self, x: Var, col: Var) -> Result<Var> {
        let (tx, tc) = (self.value(x), self.value(col));
        if tc.shape() != col_shape(tx.shape()).as_slice() {
            return Err(shape_err!("mul_col: {:?} * {:?}", tx.shape(), tc.shape()));
        }
        let data = tx
            .rows()
            .zip(tc.data())
            .flat_map(|(r, &cv)| r.iter().map(move |&v| v * cv))
            .collect();
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(t, Op::MulCol(x, col), &[x, col]))
    }

    pub fn scale(&mut self, x: Var, k: T) -> Var {
        let t = self.value(x).map(|v| v * k);
        self.push(t, Op::Scale(x, k), &[x])
    }

    pub fn add_scalar(&mut self, x: Var, k: T) -> Var {
        let t = self.value(x).map(|v| v + k);
        self.push(t, Op::AddScalar(x), &[x])
    }

    /// Matrix product over the last two axes. `b` is either a rank-2 matrix
    /// shared across the leading axes of `a`, or has the same leading axes.
    /// With `trans_b`, `b` holds the transpose of the right operand.
    pub fn matmul_ext(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() < 2 || tb.rank() < 2 {
            return Err(shape_err!("matmul needs rank >= 2, got {:?} and {:?}", ta.shape(), tb.shape()));
        }
        let sa = ta.shape();
        let sb = tb.shape();
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = if trans_b {
            (sb[sb.len() - 1], sb[sb.len() - 2])
        } else {
            (sb[sb.len() - 2], sb[sb.len() - 1])
        };
        if k != kb {
            return Err(shape_err!("matmul inner dims: {sa:?} x {sb:?} (trans_b={trans_b})"));
        }
        let batched = tb.rank() > 2;
        if batched && sa[..sa.len() - 2] != sb[..sb.len() - 2] {
            return Err(shape_err!("matmul batch dims: {sa:?} x {sb:?}"));
        }
        let batch: usize = sa[..sa.len() - 2].iter().product();
        let mut out_shape = sa[..sa.len() - 2].to_vec();
        out_shape.extend([m, n]);
        let mut out = vec![T::zero(); batch * m * n];
        if batched {
            for bi in 0..batch {
                let a_s = &ta.data()[bi * m * k..(bi + 1) * m * k];
                let b_s = &tb.data()[bi * k * n..(bi + 1) * k * n];
                let o_s = &mut out[bi * m * n..(bi + 1) * m * n];
                if trans_b {
                    kernels::matmul_nt_acc(a_s, b_s, o_s, m, k, n);
                } else {
                    kernels::matmul_nn_acc(a_s, b_s, o_s, m, k, n);
                }
            }
        } else if trans_b {
            kernels::matmul_nt_acc(ta.data(), tb.data(), &mut out, batch * m, k, n);
        } else {
            kernels::matmul_nn_acc(ta.data(), tb.data(), &mut out, batch * m, k, n);
        }
        let t = Tensor::new(out_shape, out)?;
        let op = Op::Matmul { a, b, trans_b, batched, batch, m, k, n };
        Ok(self.push(t, op, &[a, b]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_ext(a, b, false)
    }

    /// `a · bᵀ` over the last two axes.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_ext(a, b, true)
    }

    /// `[B, N, h·dk] -> [B, h, N, dk]`
    pub fn split_heads(&mut self, x: Var, heads: usize) -> Result<Var> {
        let tx = self.value(x);
        let s = tx.shape();
        if s.len() != 3 || heads == 0 || !s[2].is_multiple_of(heads) {
            return Err(shape_err!("split_heads({heads}) on {s:?}"));
        }
        let (b, n, d) = (s[0], s[1], s[2]);
        let dk = d / heads;
        let mut out = vec![T::zero(); tx.len()];
        let src = tx.data();
        for bi in 0..b {
            for ni in 0..n {
                for h in 0..heads {
                    let from = (bi * n + ni) * d + h * dk;
                    let to = ((bi * heads + h) * n + ni) * dk;
                    out[to..to + dk].copy_from_slice(&src[from..from + dk]);
                }
            }
        }
        let t = Tensor::new(vec![b, heads, n, dk], out)?;
        Ok(self.push(t, Op::SplitHeads(x), &[x]))
    }

    /// `[B, h, N, dk] -> [B, N, h·dk]`
    pub fn merge_heads(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let s = tx.shape();
        if s.len() != 4 {
            return Err(shape_err!("merge_heads on {s:?}"));
        }
        let (b, heads, n, dk) = (s[0], s[1], s[2], s[3]);
        let d = heads * dk;
        let mut out = vec![T::zero(); tx.len()];
        let src = tx.data();
        for bi in 0..b {
            for ni in 0..n {
                for h in 0..heads {
                    let to = (bi * n + ni) * d + h * dk;
                    let from = ((bi * heads + h) * n + ni) * dk;
                    out[to..to + dk].copy_from_slice(&src[from..from + dk]);
                }
            }
        }
        let t = Tensor::new(vec![b, n, d], out)?;
        Ok(self.push(t, Op::MergeHeads(x, heads), &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        Ok(self.push(t, Op::Reshape(x), &[x]))
    }

    fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize) {
        let outer = shape[..axis].iter().product();
        let inner = shape[axis..].iter().product();
        (outer, inner)
    }

    /// Inserts a new axis of size `count` at position `axis`, repeating the
    /// input along it.
    pub fn expand(&mut self, x: Var, axis: usize, count: usize) -> Result<Var> {
        let tx = self.value(x);
        if axis > tx.rank() || count == 0 {
            return Err(shape_err!("expand axis {axis} x{count} on {:?}", tx.shape()));
        }
        let (outer, inner) = Self::split_at_axis(tx.shape(), axis);
        let mut shape = tx.shape().to_vec();
        shape.insert(axis, count);
        let mut out = Vec::with_capacity(outer * count * inner);
        for o in 0..outer {
            let block = &tx.data()[o * inner..(o + 1) * inner];
            for _ in 0..count {
                out.extend_from_slice(block);
            }
        }
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::Expand { x, outer, count, inner }, &[x]))
    }

    /// Sums out one axis.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let tx = self.value(x);
        if axis >= tx.rank() {
            return Err(shape_err!("sum_axis {axis} on {:?}", tx.shape()));
        }
        let s = tx.shape();
        let outer: usize = s[..axis].iter().product();
        let count = s[axis];
        let inner: usize = s[axis + 1..].iter().product();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for c in 0..count {
                let src = &tx.data()[(o * count + c) * inner..(o * count + c + 1) * inner];
                for (d, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d = *d + v;
                }
            }
        }
        let mut shape = s.to_vec();
        shape.remove(axis);
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::SumAxis { x, outer, count, inner }, &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let t = Tensor::scalar(self.value(x).data().iter().copied().sum());
        self.push(t, Op::SumAll(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let t = Tensor::scalar(tx.data().iter().copied().sum::<T>() / T::lit(tx.len() as f64));
        self.push(t, Op::MeanAll(x), &[x])
    }

    /// Row-wise inner product over the last axis; output keeps a unit last axis.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(ta, tb, "row_dot")?;
        let data = ta.rows().zip(tb.rows()).map(|(x, y)| dot(x, y)).collect();
        let t = Tensor::new(col_shape(ta.shape()), data)?;
        Ok(self.push(t, Op::RowDot(a, b), &[a, b]))
    }

    /// Selects entry `index` of the last axis, keeping a unit last axis.
    pub fn column(&mut self, x: Var, index: usize) -> Result<Var> {
        let tx = self.value(x);
        if index >= tx.last_dim() {
            return Err(shape_err!("column {index} of {:?}", tx.shape()));
        }
        let data = tx.rows().map(|r| r[index]).collect();
        let t = Tensor::new(col_shape(tx.shape()), data)?;
        Ok(self.push(t, Op::Column(x, index), &[x]))
    }

    /// Appends a zero coordinate to the last axis: `[.., d] -> [.., d + 1]`.
    pub fn lift_zero(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let mut shape = tx.shape().to_vec();
        let last = shape.last_mut().ok_or_else(|| shape_err!("lift_zero on a scalar"))?;
        *last += 1;
        let data = tx
            .rows()
            .flat_map(|r| r.iter().copied().chain(std::iter::once(T::zero())))
            .collect();
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t, Op::LiftZero(x), &[x]))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let d = tx.last_dim();
        let mut out = vec![T::zero(); tx.len()];
        for (o, r) in out.chunks_mut(d).zip(tx.rows()) {
            softmax_row(r, o);
        }
        let t = Tensor::new(tx.shape().to_vec(), out).expect("same shape");
        self.push(t, Op::Softmax(x), &[x])
    }

    /// Layer normalization over the last axis with affine `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x), self.value(gamma), self.value(beta));
        let d = tx.last_dim();
        if tg.shape() != [d] || tb.shape() != [d] {
            return Err(shape_err!(
                "layer_norm: x {:?}, gamma {:?}, beta {:?}",
                tx.shape(),
                tg.shape(),
                tb.shape()
            ));
        }
        let mut out = Vec::with_capacity(tx.len());
        let mut stats = Vec::with_capacity(tx.len() / d);
        for r in tx.rows() {
            let (mean, rstd) = row_stats(r, eps);
            stats.push((mean, rstd));
            for ((&v, &g), &b) in r.iter().zip(tg.data()).zip(tb.data()) {
                out.push((v - mean) * rstd * g + b);
            }
        }
        let t = Tensor::new(tx.shape().to_vec(), out)?;
        Ok(self.push(t, Op::LayerNorm { x, gamma, beta, stats }, &[x, gamma, beta]))
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Var {
        let t = self.value(x).map(|v| act.apply(v));
        self.push(t, Op::Act(x, act), &[x])
    }

    /// Inverted dropout: in training mode each entry is zeroed with
    /// probability `p` and survivors are scaled by `1/(1-p)`; otherwise the
    /// input is returned unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidConfig(format!("dropout probability {p} not in [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep = T::lit(1.0 / (1.0 - p));
        let tx = self.value(x);
        let mask: Vec<T> = (0..tx.len())
            .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep })
            .collect();
        let data = tx.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(t, Op::Dropout(x, mask), &[x]))
    }

    /// Row lookup into a rank-2 table: `[rows, d] -> [indices.len(), d]`.
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let tt = self.value(table);
        if tt.rank() != 2 {
            return Err(shape_err!("gather from {:?}", tt.shape()));
        }
        if indices.is_empty() {
            return Err(shape_err!("gather with no indices"));
        }
        let rows = tt.shape()[0];
        let mut data = Vec::with_capacity(indices.len() * tt.last_dim());
        for &i in indices {
            if i >= rows {
                return Err(Error::Lookup(format!("row {i} out of bounds for table of {rows}")));
            }
            data.extend_from_slice(tt.row(i));
        }
        let t = Tensor::new(vec![indices.len(), tt.last_dim()], data)?;
        Ok(self.push(t, Op::Gather(table, indices.to_vec()), &[table]))
    }

    /// Applies a radial manifold map row-wise over the last axis.
    pub fn radial(&mut self, x: Var, map: RadialMap<T>) -> Result<Var> {
        let tx = self.value(x);
        if map == RadialMap::SphereProject && tx.rows().any(|r| kernels::norm(r) == T::zero()) {
            return Err(Error::Domain("sphere projection of a zero vector".into()));
        }
        let d = tx.last_dim();
        let mut out = vec![T::zero(); tx.len()];
        for (o, r) in out.chunks_mut(d).zip(tx.rows()) {
            map.forward_row(r, o);
        }
        let t = Tensor::new(tx.shape().to_vec(), out)?;
        Ok(self.push(t, Op::Radial(x, map), &[x]))
    }

    /// Sphere exponential map at the north pole (last coordinate axis).
    pub fn sphere_exp_mu(&mut self, v: Var) -> Result<Var> {
        let tv = self.value(v);
        let d = tv.last_dim();
        let mut out = vec![T::zero(); tv.len()];
        for (o, r) in out.chunks_mut(d).zip(tv.rows()) {
            mk::sphere_exp_mu_row(r, o);
        }
        let t = Tensor::new(tv.shape().to_vec(), out)?;
        Ok(self.push(t, Op::SphereExpMu(v), &[v]))
    }

    /// Sphere logarithmic map at the north pole; fails at the antipode.
    pub fn sphere_log_mu(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let d = tx.last_dim();
        let mut out = vec![T::zero(); tx.len()];
        for (o, r) in out.chunks_mut(d).zip(tx.rows()) {
            if !mk::sphere_log_mu_row(r, o) {
                return Err(Error::Domain("sphere log map at the antipode of the base point".into()));
            }
        }
        let t = Tensor::new(tx.shape().to_vec(), out)?;
        Ok(self.push(t, Op::SphereLogMu(x), &[x]))
    }

    /// Möbius scalar multiplication `r ⊙ x` row-wise, `r` of shape `[.., 1]`.
    pub fn mobius_scale(&mut self, r: Var, x: Var, c: T) -> Result<Var> {
        let (tr, tx) = (self.value(r), self.value(x));
        if tr.shape() != col_shape(tx.shape()).as_slice() {
            return Err(shape_err!("mobius_scale: r {:?}, x {:?}", tr.shape(), tx.shape()));
        }
        let data = tx
            .rows()
            .zip(tr.data())
            .flat_map(|(row, &rv)| {
                let (k, _, _) = mk::mobius_scale_coefficients(rv, kernels::norm(row), c);
                row.iter().map(move |&v| k * v)
            })
            .collect();
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(t, Op::MobiusScale { r, x, c }, &[r, x]))
    }

    /// Row-wise Poincaré distance between matching rows of `x` and `y`.
    pub fn poincare_distance(&mut self, x: Var, y: Var, c: T) -> Result<Var> {
        let (tx, ty) = (self.value(x), self.value(y));
        same_shape(tx, ty, "poincare_distance")?;
        let data = tx
            .rows()
            .zip(ty.rows())
            .map(|(a, b)| mk::poincare_distance_row(a, b, c))
            .collect();
        let t = Tensor::new(col_shape(tx.shape()), data)?;
        Ok(self.push(t, Op::PoincareDist { x, y, c }, &[x, y]))
    }

    /// Mean over rows of label-smoothed cross-entropy: the target class gets
    /// weight `1 - eps`, every other class `eps / (C - 1)`.
    pub fn smoothed_cross_entropy(&mut self, logits: Var, targets: &[usize], eps: T) -> Result<Var> {
        let tl = self.value(logits);
        let classes = tl.last_dim();
        let rows = tl.len() / classes;
        if classes < 2 {
            return Err(Error::InvalidConfig("label smoothing needs at least 2 classes".into()));
        }
        if !(eps >= T::zero() && eps < T::one()) {
            return Err(Error::InvalidConfig(format!("label smoothing {eps} not in [0, 1)")));
        }
        if targets.len() != rows {
            return Err(shape_err!("{} targets for {rows} rows", targets.len()));
        }
        let off = eps / T::lit((classes - 1) as f64);
        let mut total = T::zero();
        for (r, &t) in tl.rows().zip(targets) {
            if t >= classes {
                return Err(Error::Lookup(format!("target {t} out of {classes} classes")));
            }
            let lse = log_sum_exp(r);
            let weighted: T = r.iter().map(|&s| off * s).sum::<T>() + (T::one() - eps - off) * r[t];
            total = total + lse - weighted;
        }
        let t = Tensor::scalar(total / T::lit(rows as f64));
        let op = Op::SmoothedCe {
            logits,
            targets: targets.to_vec(),
            eps,
        };
        Ok(self.push(t, op, &[logits]))
    }

    /// Mean over rows of the Shannon entropy (natural log) of the last axis,
    /// with `0·log 0 = 0`.
    pub fn entropy(&mut self, p: Var) -> Var {
        let tp = self.value(p);
        let rows = tp.len() / tp.last_dim();
        let total: T = tp
            .data()
            .iter()
            .map(|&a| if a > T::zero() { -a * a.ln() } else { T::zero() })
            .sum();
        let t = Tensor::scalar(total / T::lit(rows as f64));
        self.push(t, Op::Entropy(p), &[p])
    }

    /// Reverse sweep from a scalar `loss`, returning gradients for every
    /// tracked leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(shape_err!("backward from non-scalar of shape {:?}", self.shape(loss)));
        }
        Ok(super::backward::run(self, loss))
    }
}
