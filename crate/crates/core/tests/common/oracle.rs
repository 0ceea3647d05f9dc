//! Plain-loop reference implementations of the block, one token at a time.

use cat_core::attention::{FeedForward, Linear};
use cat_core::tensor::Tensor;

pub type Row = Vec<f64>;

pub fn affine(x: &[f64], l: &Linear<Tensor<f64>>) -> Row {
    let w = &l.weight;
    let (n_in, n_out) = (w.shape()[0], w.shape()[1]);
    assert_eq!(x.len(), n_in);
    (0..n_out)
        .map(|j| {
            let b = l.bias.as_ref().map_or(0.0, |b| b.data()[j]);
            b + (0..n_in).map(|i| x[i] * w.data()[i * n_out + j]).sum::<f64>()
        })
        .collect()
}

pub fn mat(x: &[f64], w: &Tensor<f64>) -> Row {
    affine(x, &Linear { weight: w.clone(), bias: None })
}

// every oracle below uses the tanh activation so it can be written with std
pub fn ff(x: &[f64], p: &FeedForward<Tensor<f64>>) -> Row {
    let h: Row = affine(x, &p.up).iter().map(|v| v.tanh()).collect();
    affine(&h, &p.down)
}

pub fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Row {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    x.iter()
        .zip(gamma.iter().zip(beta))
        .map(|(v, (g, b))| (v - mean) / (var + eps).sqrt() * g + b)
        .collect()
}

pub fn softmax(x: &[f64]) -> Row {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Row = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Row {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
