mod common;

use std::collections::HashSet;
use std::path::Path;

use cat_core::attention::{BlockConfig, Variant};
use cat_core::kg::{
    compose, evaluate, filtered_rank, load_triples, rank_in_scores, routing_entropy, smoothed_ce_loss, split_ranks,
    total_loss, unfiltered_rank_in_scores, DropoutConfig, EntropySign, KgModel, KgParams, Metrics, ModelConfig, Split,
    TripleStore,
};
use cat_core::manifolds::{exp0, project_ball, sphere_exp_mu, sphere_log_mu, sphere_project, TangentVector};
use cat_core::tensor::{grad_check, Activation, Graph, Tensor};
use cat_core::Error;
use common::oracle::*;
use common::{random_tensor, toy_store};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model_config(variant: Variant, d: usize, entities: usize, relations: usize) -> ModelConfig {
    ModelConfig {
        block: BlockConfig {
            variant,
            d,
            activation: Activation::Tanh,
            ..BlockConfig::default()
        },
        dropout: DropoutConfig::default(),
        num_entities: entities,
        num_relations: relations,
    }
}

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn three_line_file_counts() {
    let dir = tempfile::tempdir().unwrap();
    let tr = write(dir.path(), "train.txt", "a\tr\tb\nb\tr\ta\na\tr\ta\n");
    let va = write(dir.path(), "valid.txt", "");
    let te = write(dir.path(), "test.txt", "");
    let s = load_triples(&tr, &va, &te).unwrap();
    assert_eq!((s.num_entities(), s.num_relations()), (2, 1));
}

#[test]
fn duplicate_lines_collapse_in_the_filter() {
    let dir = tempfile::tempdir().unwrap();
    let tr = write(dir.path(), "train.txt", "a\tr\tb\na\tr\tb\n");
    let va = write(dir.path(), "valid.txt", "a\tr\tb\n");
    let te = write(dir.path(), "test.txt", "a\tr\tc\n");
    let s = load_triples(&tr, &va, &te).unwrap();
    let (a, r) = (s.entity_index("a").unwrap(), s.relation_index("r").unwrap());
    let tails = s.known_tails(a, r).unwrap();
    assert_eq!(tails.len(), 2);
    assert!(tails.contains(&s.entity_index("c").unwrap()));
}

#[test]
fn malformed_lines_report_their_number() {
    let dir = tempfile::tempdir().unwrap();
    let tr = write(dir.path(), "train.txt", "a\tr\tb\n\na r b\n");
    let va = write(dir.path(), "valid.txt", "");
    let te = write(dir.path(), "test.txt", "");
    match load_triples(&tr, &va, &te) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a parse error, got {other:?}"),
    }
    let missing = dir.path().join("nope.txt");
    assert!(matches!(load_triples(&missing, &va, &te), Err(Error::Io { .. })));
}

#[test]
fn fb15k237_counts() {
    let Ok(dir) = std::env::var("CAT_FB15K237_DIR") else {
        eprintln!("CAT_FB15K237_DIR not set; skipping");
        return;
    };
    let dir = Path::new(&dir);
    let s = load_triples(&dir.join("train.txt"), &dir.join("valid.txt"), &dir.join("test.txt")).unwrap();
    assert_eq!(s.num_entities(), 14_541);
    assert_eq!(s.num_relations(), 237);
    assert_eq!(s.split(Split::Train).len(), 272_115);
}

#[test]
fn compose_in_eval_mode_is_the_exact_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = random_tensor(&mut rng, &[3, 6], 1.0);
    let r = random_tensor(&mut rng, &[3, 6], 1.0);
    let mut g = Graph::new();
    let (hv, rv) = (g.constant(h.clone()), g.constant(r.clone()));
    let x = compose(&mut g, hv, rv, 0.2, false, &mut rng).unwrap();
    let want: Vec<f64> = h.data().iter().zip(r.data()).map(|(a, b)| a + b).collect();
    assert_eq!(g.value(x).data(), want.as_slice());

    let neg = g.constant(h.map(|v| -v));
    let hv = g.constant(h);
    let z = compose(&mut g, hv, neg, 0.2, false, &mut rng).unwrap();
    assert!(g.value(z).data().iter().all(|&v| v == 0.0));
}

#[test]
fn compose_in_training_mode_is_unbiased() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = Tensor::from_f64(&[1, 4], &[0.5, -1.0, 2.0, 0.8]).unwrap();
    let r = Tensor::from_f64(&[1, 4], &[0.3, 0.2, -0.5, 0.7]).unwrap();
    let draws = 10_000;
    let mut mean = [0.0; 4];
    for _ in 0..draws {
        let mut g = Graph::new();
        let (hv, rv) = (g.constant(h.clone()), g.constant(r.clone()));
        let x = compose(&mut g, hv, rv, 0.2, true, &mut rng).unwrap();
        for (m, v) in mean.iter_mut().zip(g.value(x).data()) {
            *m += v / draws as f64;
        }
    }
    for (k, m) in mean.iter().enumerate() {
        let want = h.data()[k] + r.data()[k];
        assert!(((m - want) / want).abs() < 0.02, "entry {k}: {m} vs {want}");
    }
}

/// Eval-mode pipeline for one `(h, r)` pair written with plain loops.
fn transcribed_logits(model: &KgModel<f64>, h: usize, r: usize) -> Row {
    let p = &model.params;
    let cfg = &model.config.block;
    let x = add(p.entity.row(h), p.relation.row(r));
    let block = &p.block;

    let e = block.euclidean.as_ref().unwrap();
    // a single token attends only to itself
    let z = affine(&affine(&x, &e.value), &e.output);
    let eps = cfg.layer_norm_eps;
    let h1 = layer_norm(&add(&x, &z), e.norm1.gamma.data(), e.norm1.beta.data(), eps);
    let y_e = layer_norm(&add(&h1, &ff(&h1, &e.ff)), e.norm2.gamma.data(), e.norm2.beta.data(), eps);

    let hp = block.hyperbolic.as_ref().unwrap();
    let c = cfg.curvature;
    let v = exp0(&TangentVector::new(mat(&x, &hp.w_v)), c);
    let agg = project_ball(v.mobius_scalar_mul(1.0).coords(), c);
    let y_h = ff(&agg.log0().coords, &hp.ff);

    let sp = block.spherical.as_ref().unwrap();
    let mut lifted = x.clone();
    lifted.push(0.0);
    let pt = sphere_exp_mu(&TangentVector::new(lifted));
    let mixed = sphere_project(pt.coords()).unwrap();
    let y_s = ff(&sphere_log_mu(&mixed).unwrap().coords, &sp.ff);

    let router = block.router.as_ref().unwrap();
    let hidden: Row = affine(&x, &router.hidden).iter().map(|v| v.tanh()).collect();
    let alpha = softmax(&affine(&hidden, &router.out));
    let y: Row = (0..cfg.d)
        .map(|k| alpha[0] * y_e[k] + alpha[1] * y_h[k] + alpha[2] * y_s[k])
        .collect();
    p.entity.rows().map(|row| dot(&y, row)).collect()
}

#[test]
fn scores_match_a_transcribed_pipeline() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = KgModel::<f64>::init(model_config(Variant::Cat, 8, 5, 2), &mut rng).unwrap();
    for h in 0..5 {
        for r in 0..2 {
            let got = model.score_all_tails(h, r).unwrap();
            assert_eq!(got.len(), 5);
            let want = transcribed_logits(&model, h, r);
            assert!(max_diff(&got, &want) < 1e-10, "({h}, {r}): {got:?} vs {want:?}");
        }
    }
    assert!(matches!(model.score_all_tails(5, 0), Err(Error::Lookup(_))));
    assert!(matches!(model.score_all_tails(0, 2), Err(Error::Lookup(_))));
}

#[test]
fn dot_product_scoring_recovers_orthonormal_rows() {
    // the block is bypassed: the query is an entity row itself
    let table = Tensor::<f64>::eye(5);
    for k in 0..5 {
        let mut g = Graph::new();
        let t = g.constant(table.clone());
        let x = g.gather(t, &[k]).unwrap();
        let logits = g.matmul_nt(x, t).unwrap();
        let s = g.value(logits).data();
        let argmax = (0..5).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
        assert_eq!(argmax, k);
    }
}

#[test]
fn smoothed_targets_and_uniform_loss() {
    // d/dlogits of the loss is softmax(logits) - y, so y can be read back
    let mut g = Graph::new();
    let logits = g.param(Tensor::from_f64(&[1, 3], &[0.2, -0.4, 1.1]).unwrap());
    let loss = smoothed_ce_loss(&mut g, logits, &[0], 0.1).unwrap();
    let grads = g.backward(loss).unwrap();
    let p = softmax(g.value(logits).data());
    let y: Row = p.iter().zip(grads.get(logits).unwrap().data()).map(|(p, d)| p - d).collect();
    assert!(max_diff(&y, &[0.9, 0.05, 0.05]) < 1e-15);
    assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-15);

    let mut g = Graph::new();
    let logits = g.constant(Tensor::full(&[2, 4], 0.3));
    let loss = smoothed_ce_loss(&mut g, logits, &[1, 3], 0.0).unwrap();
    assert!((g.value(loss).item().unwrap() - 4f64.ln()).abs() < 1e-15);

    let one = g.constant(Tensor::zeros(&[1, 1]));
    assert!(matches!(smoothed_ce_loss(&mut g, one, &[0], 0.1), Err(Error::InvalidConfig(_))));
}

#[test]
fn smoothed_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let logits = random_tensor(&mut rng, &[3, 7], 2.0);
        let targets: Vec<usize> = (0..3).map(|_| rng.gen_range(0..7)).collect();
        let rep = grad_check(|g, v| smoothed_ce_loss(g, v[0], &targets, 0.1), &[logits], 1e-5);
        assert!(rep.passed(1e-6), "{rep:?}");
    }
}

fn entropy_of(rows: &[[f64; 3]]) -> f64 {
    let data: Vec<f64> = rows.iter().flatten().copied().collect();
    let mut g = Graph::new();
    let a = g.constant(Tensor::new(vec![rows.len(), 1, 3], data).unwrap());
    let e = routing_entropy(&mut g, a);
    g.value(e).item().unwrap()
}

#[test]
fn entropy_examples() {
    let third = 1.0 / 3.0;
    assert!((entropy_of(&[[third; 3]]) - 3f64.ln()).abs() < 1e-15);
    assert_eq!(entropy_of(&[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]), 0.0);
    assert!((entropy_of(&[[0.5, 0.5, 0.0]]) - 2f64.ln()).abs() < 1e-15);
    // mean over tokens
    let mixed = entropy_of(&[[third; 3], [1.0, 0.0, 0.0]]);
    assert!((mixed - 3f64.ln() / 2.0).abs() < 1e-15);
}

#[test]
fn total_loss_sign_and_weight() {
    let mut g = Graph::new();
    let ce = g.constant(Tensor::scalar(2.5));
    let uniform = g.constant(Tensor::scalar(3f64.ln()));
    let one_hot = g.constant(Tensor::scalar(0.0));
    let plain = total_loss(&mut g, ce, uniform, 0.0, EntropySign::Subtract).unwrap();
    assert_eq!(g.value(plain).item().unwrap(), 2.5);
    let u = total_loss(&mut g, ce, uniform, 0.01, EntropySign::Subtract).unwrap();
    let o = total_loss(&mut g, ce, one_hot, 0.01, EntropySign::Subtract).unwrap();
    let gap = g.value(o).item().unwrap() - g.value(u).item().unwrap();
    assert!((gap - 0.01 * 3f64.ln()).abs() < 1e-15);
    let added = total_loss(&mut g, ce, uniform, 0.01, EntropySign::Add).unwrap();
    assert!((g.value(added).item().unwrap() - (2.5 + 0.01 * 3f64.ln())).abs() < 1e-15);
    assert!(matches!(
        total_loss(&mut g, ce, uniform, -0.1, EntropySign::Subtract),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn entropy_term_moves_router_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = KgModel::<f64>::init(model_config(Variant::Cat, 8, 5, 2), &mut rng).unwrap();
    let router_grads = |lambda: f64| -> Vec<f64> {
        let mut g = Graph::new();
        let p = model.bind(&mut g);
        let fwd = model.forward(&mut g, &p, &[0, 1, 2], &[0, 1, 0], false, &mut rng.clone()).unwrap();
        let ce = smoothed_ce_loss(&mut g, fwd.logits, &[1, 2, 3], 0.1).unwrap();
        let ent = routing_entropy(&mut g, fwd.alpha.unwrap());
        let loss = total_loss(&mut g, ce, ent, lambda, EntropySign::Subtract).unwrap();
        let grads = g.backward(loss).unwrap();
        let router = p.block.router.as_ref().unwrap();
        grads.get(router.out.weight).unwrap().data().to_vec()
    };
    let with = router_grads(0.01);
    let without = router_grads(0.0);
    assert!(with.iter().any(|v| *v != 0.0));
    assert!(max_diff(&with, &without) > 0.0);
}

#[test]
fn full_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut config = model_config(Variant::Cat, 4, 5, 2);
    config.block.heads = 2;
    let model = KgModel::<f64>::init(config, &mut rng).unwrap();
    let mut inputs = Vec::new();
    let _ = model.params.map(&mut |t| inputs.push(t.clone()));
    let mut next = 0;
    let layout: KgParams<usize> = model.params.map(&mut |_| {
        next += 1;
        next - 1
    });
    let f = |g: &mut Graph<f64>, vars: &[cat_core::tensor::Var]| {
        let p = layout.map(&mut |&k| vars[k]);
        let fwd = model.forward(g, &p, &[0, 3, 4], &[1, 0, 1], false, &mut ChaCha8Rng::seed_from_u64(0))?;
        let ce = smoothed_ce_loss(g, fwd.logits, &[2, 1, 0], 0.1)?;
        let ent = routing_entropy(g, fwd.alpha.unwrap());
        total_loss(g, ce, ent, 0.01, EntropySign::Subtract)
    };
    let rep = grad_check(f, &inputs, 1e-5);
    assert!(rep.passed(1e-6), "{rep:?}");
}

#[test]
fn metrics_arithmetic() {
    let m = Metrics::from_ranks(&[1, 2, 4]).unwrap();
    assert!((m.mrr - 7.0 / 12.0).abs() < 1e-15);
    assert_eq!(m.hits_at_10, 1.0);
    let m = Metrics::from_ranks(&[1, 1, 1]).unwrap();
    assert_eq!((m.mrr, m.hits_at_10), (1.0, 1.0));
    assert!(matches!(Metrics::from_ranks(&[]), Err(Error::InvalidConfig(_))));
}

#[test]
fn ranking_examples() {
    let scores = [0.1, 0.9, 0.3, 0.3, -1.0];
    assert_eq!(unfiltered_rank_in_scores(&scores, 1), 1);
    // ties count against the target
    assert_eq!(unfiltered_rank_in_scores(&scores, 2), 3);
    let all: HashSet<usize> = (0..5).collect();
    assert_eq!(rank_in_scores(&scores, 4, Some(&all)), 1);
    let one: HashSet<usize> = [1].into();
    assert_eq!(rank_in_scores(&scores, 2, Some(&one)), 2);
    assert_eq!(rank_in_scores(&[0.0, f64::NAN, 5.0], 1, None), 3);
}

proptest! {
    #[test]
    fn filtering_never_worsens_the_rank(
        scores in prop::collection::vec(-3.0f64..3.0, 2..30),
        mask in prop::collection::vec(any::<bool>(), 30),
        pick in 0usize..30,
    ) {
        let target = pick % scores.len();
        let filter: HashSet<usize> = (0..scores.len()).filter(|&j| mask[j]).collect();
        prop_assert!(rank_in_scores(&scores, target, Some(&filter)) <= unfiltered_rank_in_scores(&scores, target));
    }
}

#[test]
fn model_filtered_rank_agrees_with_raw_scores() {
    let store = toy_store(12, 2, 40, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let model = KgModel::<f64>::init(model_config(Variant::Euclidean, 8, 12, 2), &mut rng).unwrap();
    let ranks = split_ranks(&store, &model, Split::Train).unwrap();
    for (&t, &rank) in store.split(Split::Train).iter().zip(&ranks) {
        let scores = model.score_all_tails(t.head, t.relation).unwrap();
        assert_eq!(rank, filtered_rank(&store, &model, t).unwrap());
        assert!(rank <= unfiltered_rank_in_scores(&scores, t.tail));
    }
}

#[test]
fn evaluation_is_deterministic_and_rejects_empty_splits() {
    let store = toy_store(20, 3, 60, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = KgModel::<f64>::init(model_config(Variant::Cat, 8, 20, 3), &mut rng).unwrap();
    let a = evaluate(&store, &model, Split::Train).unwrap();
    let b = evaluate(&store, &model, Split::Train).unwrap();
    assert_eq!(a, b);
    assert!((0.0..=1.0).contains(&a.mrr) && (0.0..=1.0).contains(&a.hits_at_10));
    assert!(matches!(evaluate(&store, &model, Split::Test), Err(Error::InvalidConfig(_))));
}

#[test]
fn random_model_mrr_matches_simulation() {
    let entities = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let name = |e: usize| format!("e{e}");
    let ring: Vec<_> = (0..entities).map(|e| (name(e), "r0".to_string(), name((e + 1) % entities))).collect();
    let test: Vec<_> = (0..2000)
        .map(|_| {
            let (h, r, t) = (rng.gen_range(0..entities), rng.gen_range(0..4), rng.gen_range(0..entities));
            (name(h), format!("r{r}"), name(t))
        })
        .collect();
    let store = TripleStore::from_named(&ring, &[], &test);
    let model = KgModel::<f64>::init(model_config(Variant::Euclidean, 16, entities, 4), &mut rng).unwrap();
    let got = evaluate(&store, &model, Split::Test).unwrap().mrr;

    // same filtered candidate sets, uniformly random scores
    let triples = store.split(Split::Test);
    let trials = 10_000;
    let mut sim = 0.0;
    for _ in 0..trials {
        let t = triples[rng.gen_range(0..triples.len())];
        let scores: Vec<f64> = (0..entities).map(|_| rng.gen()).collect();
        sim += 1.0 / rank_in_scores(&scores, t.tail, store.known_tails(t.head, t.relation)) as f64;
    }
    let sim = sim / trials as f64;
    assert!((got - sim).abs() <= 0.03, "model {got:.4} vs simulation {sim:.4}");
}

#[test]
fn checkpoints_round_trip_and_reject_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.catw");
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let config = model_config(Variant::Cat, 8, 6, 2);
    let model = KgModel::<f64>::init(config.clone(), &mut rng).unwrap();
    model.save(&path).unwrap();
    let back = KgModel::<f64>::load(&path, config.clone()).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.score_all_tails(1, 1).unwrap(), model.score_all_tails(1, 1).unwrap());

    let more_entities = ModelConfig { num_entities: 7, ..config.clone() };
    assert!(matches!(KgModel::<f64>::load(&path, more_entities), Err(Error::Incompatible(_))));
    let mut other_variant = config.clone();
    other_variant.block.variant = Variant::Euclidean;
    assert!(matches!(KgModel::<f64>::load(&path, other_variant), Err(Error::Incompatible(_))));
    let mut wider = config;
    wider.block.d = 16;
    assert!(matches!(KgModel::<f64>::load(&path, wider), Err(Error::Incompatible(_))));

    std::fs::write(&path, b"nonsense").unwrap();
    assert!(matches!(KgModel::<f64>::load(&path, model.config.clone()), Err(Error::Format(_))));
}

#[test]
fn routing_weights_need_a_router() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cat = KgModel::<f64>::init(model_config(Variant::Cat, 8, 5, 2), &mut rng).unwrap();
    for w in cat.routing_weights(&[(0, 0), (3, 1)]).unwrap() {
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let fixed = KgModel::<f64>::init(model_config(Variant::Spherical, 8, 5, 2), &mut rng).unwrap();
    assert!(matches!(fixed.routing_weights(&[(0, 0)]), Err(Error::UnsupportedVariant(_))));
    assert!(fixed.params.block.router.is_none());
}
