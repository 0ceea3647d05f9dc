use cat_core::tensor::checkpoint::{decode, encode};
use cat_core::tensor::{grad_check, xavier_uniform, Activation, Graph, Tensor};
use cat_core::{Error, Tensor32, Tensor64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn t(shape: &[usize], v: &[f64]) -> Tensor64 {
    Tensor::from_f64(shape, v).unwrap()
}

fn seq(shape: &[usize], seed: u64) -> Tensor64 {
    let n: usize = shape.iter().product();
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let data: Vec<f64> = (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

#[test]
fn tensor_rejects_bad_shapes() {
    assert!(matches!(Tensor64::new(vec![2, 2], vec![0.0; 3]), Err(Error::InvalidShape(_))));
    assert!(matches!(Tensor64::new(vec![0, 2], vec![]), Err(Error::InvalidShape(_))));
}

#[test]
fn matmul_identity_and_hand_expansion() {
    let mut g = Graph::new();
    let i = g.constant(Tensor64::eye(3));
    let x = g.constant(t(&[3, 1], &[1.5, -2.0, 0.25]));
    let y = g.matmul(i, x).unwrap();
    assert_eq!(g.value(y).data(), &[1.5, -2.0, 0.25]);

    let a = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let b = g.constant(t(&[2, 1], &[1.0, 1.0]));
    let c = g.matmul(a, b).unwrap();
    assert_eq!(g.value(c).data(), &[3.0, 7.0]);

    let bad = g.constant(t(&[3, 1], &[1.0, 1.0, 1.0]));
    assert!(matches!(g.matmul(a, bad), Err(Error::InvalidShape(_))));
}

#[test]
fn matmul_gradient_is_b_transpose_broadcast() {
    let a = seq(&[2, 3], 1);
    let b = seq(&[3, 4], 2);
    let mut g = Graph::new();
    let av = g.param(a);
    let bv = g.constant(b.clone());
    let p = g.matmul(av, bv).unwrap();
    let s = g.sum(p);
    let grads = g.backward(s).unwrap();
    let ga = grads.get(av).unwrap();
    for i in 0..2 {
        for k in 0..3 {
            let want: f64 = (0..4).map(|j| b.data()[k * 4 + j]).sum();
            assert!((ga.data()[i * 3 + k] - want).abs() < 1e-12);
        }
    }
    let rep = grad_check(
        |g, x| {
            let p = g.matmul(x[0], x[1])?;
            Ok(g.sum(p))
        },
        &[seq(&[2, 3], 3), seq(&[3, 4], 4)],
        1e-5,
    );
    assert!(rep.passed(1e-6), "{rep:?}");
}

#[test]
fn batched_and_transposed_matmul_gradients() {
    let w = seq(&[2, 3, 5], 9);
    let rep = grad_check(
        |g, x| {
            let p = g.matmul_nt(x[0], x[1])?;
            let q = g.matmul(p, x[2])?;
            let wv = g.constant(w.clone());
            let r = g.mul(q, wv)?;
            Ok(g.sum(r))
        },
        &[seq(&[2, 3, 4], 5), seq(&[2, 6, 4], 6), seq(&[6, 5], 7)],
        1e-5,
    );
    assert!(rep.passed(1e-6), "{rep:?}");
}

#[test]
fn softmax_examples() {
    let mut g = Graph::new();
    let x = g.constant(t(&[3, 2], &[0.0, 0.0, 1000.0, 1000.0, 0.0, 0.0]));
    let s = g.softmax(x);
    assert_eq!(&g.value(s).data()[..4], &[0.5, 0.5, 0.5, 0.5]);
    let x = g.constant(t(&[3], &[1f64.ln(), 2f64.ln(), 3f64.ln()]));
    let s = g.softmax(x);
    for (got, want) in g.value(s).data().iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
        assert!((got - want).abs() < 1e-15);
    }
}

#[test]
fn layer_norm_examples_and_gradient() {
    let mut g = Graph::new();
    let gamma = g.constant(Tensor::full(&[4], 1.0));
    let beta = g.constant(Tensor::zeros(&[4]));
    let x = g.constant(Tensor::full(&[1, 4], 3.7));
    let y = g.layer_norm(x, gamma, beta, 1e-5).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));

    let gamma = g.constant(Tensor::full(&[2], 1.0));
    let beta = g.constant(Tensor::zeros(&[2]));
    let x = g.constant(t(&[1, 2], &[1.0, -1.0]));
    let y = g.layer_norm(x, gamma, beta, 1e-12).unwrap();
    assert!(g.value(y).max_abs_diff(&t(&[1, 2], &[1.0, -1.0])).unwrap() < 1e-11);

    let w = seq(&[4, 8], 12);
    let rep = grad_check(
        |g, x| {
            let y = g.layer_norm(x[0], x[1], x[2], 1e-5)?;
            let wv = g.constant(w.clone());
            let p = g.mul(y, wv)?;
            Ok(g.sum(p))
        },
        &[seq(&[4, 8], 10), seq(&[8], 11), seq(&[8], 13)],
        1e-5,
    );
    assert!(rep.passed(1e-6), "{rep:?}");
}

#[test]
fn dropout_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = Graph::new();
    let x = g.constant(Tensor::full(&[100_000], 1.0f64));
    assert_eq!(g.dropout(x, 0.0, true, &mut rng).unwrap(), x);
    assert_eq!(g.dropout(x, 0.7, false, &mut rng).unwrap(), x);
    assert!(matches!(g.dropout(x, 1.0, true, &mut rng), Err(Error::InvalidConfig(_))));

    let y = g.dropout(x, 0.2, true, &mut rng).unwrap();
    let vals = g.value(y).data();
    let survivors = vals.iter().filter(|&&v| v != 0.0).count() as f64 / vals.len() as f64;
    assert!((survivors - 0.8).abs() < 0.01, "survivor fraction {survivors}");
    assert!(vals.iter().all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-15));
}

#[test]
fn backward_examples() {
    let x = seq(&[3, 2], 20);
    let mut g = Graph::new();
    let xv = g.param(x.clone());
    let s = g.sum(xv);
    assert_eq!(g.backward(s).unwrap().get(xv).unwrap().data(), &[1.0; 6]);

    let mut g = Graph::new();
    let xv = g.param(x.clone());
    let sq = g.mul(xv, xv).unwrap();
    let s = g.sum(sq);
    let half = g.scale(s, 0.5);
    assert_eq!(g.backward(half).unwrap().get(xv).unwrap(), &x);

    assert!(matches!(g.backward(sq), Err(Error::InvalidShape(_))));
}

#[test]
fn elementwise_and_shape_ops_pass_grad_check() {
    let w = seq(&[2, 3, 4], 33);
    let rep = grad_check(
        |g, x| {
            let a = g.add(x[0], x[1])?;
            let b = g.sub(a, x[1])?;
            let c = g.div(b, x[2])?;
            let d = g.add_bias(c, x[3])?;
            let e = g.activation(d, Activation::Gelu);
            let f = g.activation(e, Activation::Tanh);
            let col = g.row_dot(f, x[0])?;
            let h = g.mul_col(f, col)?;
            let hs = g.split_heads(h, 2)?;
            let hm = g.merge_heads(hs)?;
            let wv = g.constant(w.clone());
            let p = g.mul(hm, wv)?;
            Ok(g.mean(p))
        },
        &[
            seq(&[2, 3, 4], 30),
            seq(&[2, 3, 4], 31),
            seq(&[2, 3, 4], 32).map(|v| v.abs() + 1.0),
            seq(&[4], 34),
        ],
        1e-5,
    );
    assert!(rep.passed(1e-6), "{rep:?}");
}

#[test]
fn gather_expand_and_reductions_pass_grad_check() {
    let rep = grad_check(
        |g, x| {
            let rows = g.gather(x[0], &[2, 0, 2, 1])?;
            let r3 = g.reshape(rows, &[2, 2, 3])?;
            let e = g.expand(r3, 1, 3)?;
            let s = g.sum_axis(e, 2)?;
            let lifted = g.lift_zero(s)?;
            let c = g.column(lifted, 1)?;
            let k = g.add_scalar(c, 0.5);
            let sq = g.mul(k, k)?;
            Ok(g.sum(sq))
        },
        &[seq(&[3, 3], 40)],
        1e-5,
    );
    assert!(rep.passed(1e-6), "{rep:?}");
    let mut g = Graph::<f64>::new();
    let table = g.constant(seq(&[3, 2], 41));
    assert!(matches!(g.gather(table, &[3]), Err(Error::Lookup(_))));
}

#[test]
fn grad_check_reports_non_finite_as_failure() {
    let rep = grad_check(
        |g, x| {
            let ones = g.constant(Tensor::full(&[2], 1.0));
            let d = g.div(ones, x[0])?;
            Ok(g.sum(d))
        },
        &[t(&[2], &[0.0, 1.0])],
        1e-5,
    );
    assert!(!rep.passed(1.0));
    assert!(rep.failure.is_some());
}

#[test]
fn xavier_is_bounded_and_deterministic() {
    let a = xavier_uniform::<f64>(&[1, 1], 9).unwrap();
    assert!(a.data()[0].abs() <= 3f64.sqrt());
    assert_eq!(xavier_uniform::<f64>(&[5, 7], 3).unwrap(), xavier_uniform::<f64>(&[5, 7], 3).unwrap());
    assert!(xavier_uniform::<f64>(&[0, 7], 3).is_err());
}

#[test]
fn generic_scalar_runs_in_single_precision() {
    let mut g = Graph::<f32>::new();
    let x = g.param(Tensor32::from_f64(&[2, 3], &[0.1, 0.2, 0.3, -0.1, 0.5, 2.0]).unwrap());
    let s = g.softmax(x);
    let e = g.entropy(s);
    let grads = g.backward(e).unwrap();
    assert!(grads.get(x).unwrap().is_finite());
    let sums: Vec<f32> = g.value(s).rows().map(|r| r.iter().sum()).collect();
    assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-6));
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(v in prop::collection::vec(-50.0f64..50.0, 12)) {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![3, 4], v).unwrap());
        let s = g.softmax(x);
        for row in g.value(s).rows() {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_is_linear(v in prop::collection::vec(-2.0f64..2.0, 6), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let x = Tensor::new(vec![2, 3], v).unwrap();
        let grad_of = |wa: f64, wb: f64| {
            let mut g = Graph::new();
            let xv = g.param(x.clone());
            let sq = g.mul(xv, xv).unwrap();
            let l1 = g.sum(sq);
            let sm = g.softmax(xv);
            let l2 = g.entropy(sm);
            let l1 = g.scale(l1, wa);
            let l2 = g.scale(l2, wb);
            let l = g.add(l1, l2).unwrap();
            g.backward(l).unwrap().get(xv).unwrap().clone()
        };
        let combined = grad_of(a, b);
        let g1 = grad_of(1.0, 0.0);
        let g2 = grad_of(0.0, 1.0);
        for i in 0..6 {
            let want = a * g1.data()[i] + b * g2.data()[i];
            prop_assert!((combined.data()[i] - want).abs() < 1e-10);
        }
    }

    #[test]
    fn checkpoint_round_trips(
        shapes in prop::collection::vec(prop::collection::vec(1usize..4, 1..4), 1..4),
        name in "[a-z.]{1,12}",
    ) {
        let tensors: Vec<(String, Tensor64)> = shapes
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("{name}{i}"), seq(s, i as u64)))
            .collect();
        let refs: Vec<(String, &Tensor64)> = tensors.iter().map(|(n, t)| (n.clone(), t)).collect();
        let mut buf = Vec::new();
        encode(&mut buf, &refs).unwrap();
        let back: Vec<(String, Tensor64)> = decode(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(back, tensors);
    }
}
