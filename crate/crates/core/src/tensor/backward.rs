use super::graph::{Gradients, Graph, Node, Op, Var};
use super::kernels::{self, dot, softmax_row};
use super::Tensor;
use crate::manifolds::kernels as mk;
use crate::scalar::Real;

struct Acc<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Acc<T> {
    /// Mutable gradient buffer for `v`, allocated on first use. Returns
    /// `None` when `v` does not lead to any tracked leaf.
    fn buf<'a>(&'a mut self, nodes: &[Node<T>], v: Var) -> Option<&'a mut Vec<T>> {
        let node = &nodes[v.0];
        if !node.tracked {
            return None;
        }
        Some(self.grads[v.0].get_or_insert_with(|| vec![T::zero(); node.value.len()]))
    }

    fn add_scaled(&mut self, nodes: &[Node<T>], v: Var, g: &[T], k: T) {
        if let Some(b) = self.buf(nodes, v) {
            for (d, &s) in b.iter_mut().zip(g) {
                *d = *d + k * s;
            }
        }
    }
}

pub(super) fn run<T: Real>(graph: &Graph<T>, loss: Var) -> Gradients<T> {
    let nodes = &graph.nodes;
    let mut acc = Acc {
        grads: vec![None; nodes.len()],
    };
    if nodes[loss.0].tracked {
        acc.grads[loss.0] = Some(vec![T::one()]);
    }

    for idx in (0..=loss.0).rev() {
        let node = &nodes[idx];
        if !node.tracked || matches!(node.op, Op::Leaf) {
            continue;
        }
        let Some(g) = acc.grads[idx].take() else {
            continue;
        };
        step(nodes, &mut acc, node, &g);
        // keep the buffer so callers see a consistent vector per node
        acc.grads[idx] = Some(g);
    }

    let grads = nodes
        .iter()
        .zip(acc.grads)
        .map(|(n, g)| match (&n.op, n.tracked, g) {
            (Op::Leaf, true, Some(g)) => Some(Tensor::new(n.value.shape().to_vec(), g).expect("grad shape")),
            (Op::Leaf, true, None) => Some(Tensor::zeros(n.value.shape())),
            _ => None,
        })
        .collect();
    Gradients { grads }
}

fn val<T: Real>(nodes: &[Node<T>], v: Var) -> &Tensor<T> {
    &nodes[v.0].value
}

fn step<T: Real>(nodes: &[Node<T>], acc: &mut Acc<T>, node: &Node<T>, g: &[T]) {
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            acc.add_scaled(nodes, *a, g, T::one());
            acc.add_scaled(nodes, *b, g, T::one());
        }
        Op::Sub(a, b) => {
            acc.add_scaled(nodes, *a, g, T::one());
            acc.add_scaled(nodes, *b, g, -T::one());
        }
        Op::Mul(a, b) => {
            let (ta, tb) = (val(nodes, *a).data(), val(nodes, *b).data());
            if let Some(buf) = acc.buf(nodes, *a) {
                for i in 0..g.len() {
                    buf[i] = buf[i] + g[i] * tb[i];
                }
            }
            if let Some(buf) = acc.buf(nodes, *b) {
                for i in 0..g.len() {
                    buf[i] = buf[i] + g[i] * ta[i];
                }
            }
        }
        Op::Div(a, b) => {
            let (ta, tb) = (val(nodes, *a).data(), val(nodes, *b).data());
            if let Some(buf) = acc.buf(nodes, *a) {
                for i in 0..g.len() {
                    buf[i] = buf[i] + g[i] / tb[i];
                }
            }
            if let Some(buf) = acc.buf(nodes, *b) {
                for i in 0..g.len() {
                    buf[i] = buf[i] - g[i] * ta[i] / (tb[i] * tb[i]);
                }
            }
        }
        Op::AddBias(x, bias) => {
            acc.add_scaled(nodes, *x, g, T::one());
            let n = val(nodes, *bias).len();
            if let Some(buf) = acc.buf(nodes, *bias) {
                for row in g.chunks(n) {
                    for (d, &s) in buf.iter_mut().zip(row) {
                        *d = *d + s;
                    }
                }
            }
        }
        Op::MulCol(x, col) => {
            let (tx, tc) = (val(nodes, *x), val(nodes, *col));
            let d = tx.last_dim();
            if let Some(buf) = acc.buf(nodes, *x) {
                for ((bd, gr), &cv) in buf.chunks_mut(d).zip(g.chunks(d)).zip(tc.data()) {
                    for (o, &s) in bd.iter_mut().zip(gr) {
                        *o = *o + s * cv;
                    }
                }
            }
            if let Some(buf) = acc.buf(nodes, *col) {
                for ((o, gr), xr) in buf.iter_mut().zip(g.chunks(d)).zip(tx.rows()) {
                    *o = *o + dot(gr, xr);
                }
            }
        }
        Op::Scale(x, k) => acc.add_scaled(nodes, *x, g, *k),
        Op::AddScalar(x) => acc.add_scaled(nodes, *x, g, T::one()),
        Op::Matmul {
            a,
            b,
            trans_b,
            batched,
            batch,
            m,
            k,
            n,
        } => {
            let (ta, tb) = (val(nodes, *a).data(), val(nodes, *b).data());
            let (m, k, n) = (*m, *k, *n);
            if *batched {
                for bi in 0..*batch {
                    let gs = &g[bi * m * n..(bi + 1) * m * n];
                    let a_s = &ta[bi * m * k..(bi + 1) * m * k];
                    let b_s = &tb[bi * k * n..(bi + 1) * k * n];
                    if let Some(buf) = acc.buf(nodes, *a) {
                        let o = &mut buf[bi * m * k..(bi + 1) * m * k];
                        if *trans_b {
                            kernels::matmul_nn_acc(gs, b_s, o, m, n, k);
                        } else {
                            kernels::matmul_nt_acc(gs, b_s, o, m, n, k);
                        }
                    }
                    if let Some(buf) = acc.buf(nodes, *b) {
                        let o = &mut buf[bi * k * n..(bi + 1) * k * n];
                        if *trans_b {
                            kernels::matmul_tn_acc(gs, a_s, o, m, n, k);
                        } else {
                            kernels::matmul_tn_acc(a_s, gs, o, m, k, n);
                        }
                    }
                }
            } else {
                let rows = batch * m;
                if let Some(buf) = acc.buf(nodes, *a) {
                    if *trans_b {
                        kernels::matmul_nn_acc(g, tb, buf, rows, n, k);
                    } else {
                        kernels::matmul_nt_acc(g, tb, buf, rows, n, k);
                    }
                }
                if let Some(buf) = acc.buf(nodes, *b) {
                    if *trans_b {
                        kernels::matmul_tn_acc(g, ta, buf, rows, n, k);
                    } else {
                        kernels::matmul_tn_acc(ta, g, buf, rows, k, n);
                    }
                }
            }
        }
        Op::SplitHeads(x) => {
            // inverse permutation of split is merge
            let s = node.value.shape();
            let (b, heads, n, dk) = (s[0], s[1], s[2], s[3]);
            let d = heads * dk;
            if let Some(buf) = acc.buf(nodes, *x) {
                for bi in 0..b {
                    for ni in 0..n {
                        for h in 0..heads {
                            let to = (bi * n + ni) * d + h * dk;
                            let from = ((bi * heads + h) * n + ni) * dk;
                            for j in 0..dk {
                                buf[to + j] = buf[to + j] + g[from + j];
                            }
                        }
                    }
                }
            }
        }
        Op::MergeHeads(x, heads) => {
            let s = val(nodes, *x).shape();
            let (b, n, dk) = (s[0], s[2], s[3]);
            let heads = *heads;
            let d = heads * dk;
            if let Some(buf) = acc.buf(nodes, *x) {
                for bi in 0..b {
                    for ni in 0..n {
                        for h in 0..heads {
                            let from = (bi * n + ni) * d + h * dk;
                            let to = ((bi * heads + h) * n + ni) * dk;
                            for j in 0..dk {
                                buf[to + j] = buf[to + j] + g[from + j];
                            }
                        }
                    }
                }
            }
        }
        Op::Reshape(x) => acc.add_scaled(nodes, *x, g, T::one()),
        Op::Expand {
            x,
            outer,
            count,
            inner,
        } => {
            let (outer, count, inner) = (*outer, *count, *inner);
            if let Some(buf) = acc.buf(nodes, *x) {
                for o in 0..outer {
                    for c in 0..count {
                        let src = &g[(o * count + c) * inner..(o * count + c + 1) * inner];
                        for (d, &s) in buf[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                            *d = *d + s;
                        }
                    }
                }
            }
        }
        Op::SumAxis {
            x,
            outer,
            count,
            inner,
        } => {
            let (outer, count, inner) = (*outer, *count, *inner);
            if let Some(buf) = acc.buf(nodes, *x) {
                for o in 0..outer {
                    let src = &g[o * inner..(o + 1) * inner];
                    for c in 0..count {
                        let dst = &mut buf[(o * count + c) * inner..(o * count + c + 1) * inner];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d = *d + s;
                        }
                    }
                }
            }
        }
        Op::SumAll(x) => {
            if let Some(buf) = acc.buf(nodes, *x) {
                buf.iter_mut().for_each(|d| *d = *d + g[0]);
            }
        }
        Op::MeanAll(x) => {
            let k = g[0] / T::lit(val(nodes, *x).len() as f64);
            if let Some(buf) = acc.buf(nodes, *x) {
                buf.iter_mut().for_each(|d| *d = *d + k);
            }
        }
        Op::RowDot(a, b) => {
            let (ta, tb) = (val(nodes, *a), val(nodes, *b));
            let d = ta.last_dim();
            if let Some(buf) = acc.buf(nodes, *a) {
                for ((o, br), &gv) in buf.chunks_mut(d).zip(tb.rows()).zip(g) {
                    for (x, &y) in o.iter_mut().zip(br) {
                        *x = *x + gv * y;
                    }
                }
            }
            if let Some(buf) = acc.buf(nodes, *b) {
                for ((o, ar), &gv) in buf.chunks_mut(d).zip(ta.rows()).zip(g) {
                    for (x, &y) in o.iter_mut().zip(ar) {
                        *x = *x + gv * y;
                    }
                }
            }
        }
        Op::Column(x, index) => {
            let d = val(nodes, *x).last_dim();
            if let Some(buf) = acc.buf(nodes, *x) {
                for (o, &gv) in buf.chunks_mut(d).zip(g) {
                    o[*index] = o[*index] + gv;
                }
            }
        }
        Op::LiftZero(x) => {
            let d = val(nodes, *x).last_dim();
            if let Some(buf) = acc.buf(nodes, *x) {
                for (o, gr) in buf.chunks_mut(d).zip(g.chunks(d + 1)) {
                    for (x, &s) in o.iter_mut().zip(gr) {
                        *x = *x + s;
                    }
                }
            }
        }
        Op::Softmax(x) => {
            let y = &node.value;
            let d = y.last_dim();
            if let Some(buf) = acc.buf(nodes, *x) {
                for ((o, yr), gr) in buf.chunks_mut(d).zip(y.rows()).zip(g.chunks(d)) {
                    let s = dot(yr, gr);
                    for ((x, &yv), &gv) in o.iter_mut().zip(yr).zip(gr) {
                        *x = *x + yv * (gv - s);
                    }
                }
            }
        }
        Op::LayerNorm { x, gamma, beta, stats } => {
            let (tx, tg) = (val(nodes, *x), val(nodes, *gamma));
            let d = tx.last_dim();
            let dn = T::lit(d as f64);
            if let Some(buf) = acc.buf(nodes, *gamma) {
                for ((xr, gr), &(mean, rstd)) in tx.rows().zip(g.chunks(d)).zip(stats) {
                    for j in 0..d {
                        buf[j] = buf[j] + gr[j] * (xr[j] - mean) * rstd;
                    }
                }
            }
            if let Some(buf) = acc.buf(nodes, *beta) {
                for gr in g.chunks(d) {
                    for (o, &s) in buf.iter_mut().zip(gr) {
                        *o = *o + s;
                    }
                }
            }
            if let Some(buf) = acc.buf(nodes, *x) {
                let gamma = tg.data();
                let mut ghat = vec![T::zero(); d];
                for (((o, xr), gr), &(mean, rstd)) in
                    buf.chunks_mut(d).zip(tx.rows()).zip(g.chunks(d)).zip(stats)
                {
                    let mut m1 = T::zero();
                    let mut m2 = T::zero();
                    for j in 0..d {
                        ghat[j] = gr[j] * gamma[j];
                        m1 = m1 + ghat[j];
                        m2 = m2 + ghat[j] * (xr[j] - mean) * rstd;
                    }
                    m1 = m1 / dn;
                    m2 = m2 / dn;
                    for j in 0..d {
                        let xhat = (xr[j] - mean) * rstd;
                        o[j] = o[j] + rstd * (ghat[j] - m1 - xhat * m2);
                    }
                }
            }
        }
        Op::Act(x, act) => {
            let tx = val(nodes, *x).data();
            if let Some(buf) = acc.buf(nodes, *x) {
                for i in 0..g.len() {
                    buf[i] = buf[i] + g[i] * act.derivative(tx[i]);
                }
            }
        }
        Op::Dropout(x, mask) => {
            if let Some(buf) = acc.buf(nodes, *x) {
                for i in 0..g.len() {
                    buf[i] = buf[i] + g[i] * mask[i];
                }
            }
        }
        Op::Gather(table, indices) => {
            let d = val(nodes, *table).last_dim();
            if let Some(buf) = acc.buf(nodes, *table) {
                for (&i, gr) in indices.iter().zip(g.chunks(d)) {
                    for (o, &s) in buf[i * d..(i + 1) * d].iter_mut().zip(gr) {
                        *o = *o + s;
                    }
                }
            }
        }
        Op::Radial(x, map) => {
            let tx = val(nodes, *x);
            let d = tx.last_dim();
            if let Some(buf) = acc.buf(nodes, *x) {
                for ((o, xr), gr) in buf.chunks_mut(d).zip(tx.rows()).zip(g.chunks(d)) {
                    map.backward_row(xr, gr, o);
                }
            }
        }
        Op::SphereExpMu(v) => {
            let tv = val(nodes, *v);
            let d = tv.last_dim();
            if let Some(buf) = acc.buf(nodes, *v) {
                for ((o, vr), gr) in buf.chunks_mut(d).zip(tv.rows()).zip(g.chunks(d)) {
                    mk::sphere_exp_mu_backward_row(vr, gr, o);
                }
            }
        }
        Op::SphereLogMu(x) => {
            let tx = val(nodes, *x);
            let d = tx.last_dim();
            if let Some(buf) = acc.buf(nodes, *x) {
                for ((o, xr), gr) in buf.chunks_mut(d).zip(tx.rows()).zip(g.chunks(d)) {
                    mk::sphere_log_mu_backward_row(xr, gr, o);
                }
            }
        }
        Op::MobiusScale { r, x, c } => {
            let (tr, tx) = (val(nodes, *r), val(nodes, *x));
            let d = tx.last_dim();
            let coeffs: Vec<(T, T, T)> = tx
                .rows()
                .zip(tr.data())
                .map(|(row, &rv)| mk::mobius_scale_coefficients(rv, kernels::norm(row), *c))
                .collect();
            if let Some(buf) = acc.buf(nodes, *r) {
                for ((o, (xr, gr)), &(_, dk_dr, _)) in
                    buf.iter_mut().zip(tx.rows().zip(g.chunks(d))).zip(&coeffs)
                {
                    *o = *o + dk_dr * dot(xr, gr);
                }
            }
            if let Some(buf) = acc.buf(nodes, *x) {
                for (((o, xr), gr), &(k, _, h)) in
                    buf.chunks_mut(d).zip(tx.rows()).zip(g.chunks(d)).zip(&coeffs)
                {
                    let xg = dot(xr, gr);
                    for ((ov, &xv), &gv) in o.iter_mut().zip(xr).zip(gr) {
                        *ov = *ov + k * gv + h * xg * xv;
                    }
                }
            }
        }
        Op::PoincareDist { x, y, c } => {
            let (tx, ty) = (val(nodes, *x), val(nodes, *y));
            let d = tx.last_dim();
            let mut gx = vec![T::zero(); tx.len()];
            let mut gy = vec![T::zero(); ty.len()];
            for (i, &gv) in g.iter().enumerate() {
                mk::poincare_distance_backward_row(
                    tx.row(i),
                    ty.row(i),
                    *c,
                    gv,
                    &mut gx[i * d..(i + 1) * d],
                    &mut gy[i * d..(i + 1) * d],
                );
            }
            acc.add_scaled(nodes, *x, &gx, T::one());
            acc.add_scaled(nodes, *y, &gy, T::one());
        }
        Op::SmoothedCe { logits, targets, eps } => {
            let tl = val(nodes, *logits);
            let classes = tl.last_dim();
            let rows = targets.len();
            let off = *eps / T::lit((classes - 1) as f64);
            let scale = g[0] / T::lit(rows as f64);
            if let Some(buf) = acc.buf(nodes, *logits) {
                let mut p = vec![T::zero(); classes];
                for ((o, lr), &t) in buf.chunks_mut(classes).zip(tl.rows()).zip(targets) {
                    softmax_row(lr, &mut p);
                    for (j, (ov, &pv)) in o.iter_mut().zip(&p).enumerate() {
                        let y = if j == t { T::one() - *eps } else { off };
                        *ov = *ov + scale * (pv - y);
                    }
                }
            }
        }
        Op::Entropy(p) => {
            let tp = val(nodes, *p);
            let rows = tp.len() / tp.last_dim();
            let scale = g[0] / T::lit(rows as f64);
            if let Some(buf) = acc.buf(nodes, *p) {
                for (o, &a) in buf.iter_mut().zip(tp.data()) {
                    if a > T::zero() {
                        *o = *o - scale * (a.ln() + T::one());
                    }
                }
            }
        }
    }
}
