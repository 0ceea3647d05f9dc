#![allow(dead_code)]

pub mod oracle;

use cat_core::kg::TripleStore;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random toy graph with distinct triples; the validation split repeats the
/// first few training triples.
pub fn toy_store(entities: usize, relations: usize, triples: usize, seed: u64) -> TripleStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut train = Vec::new();
    while train.len() < triples {
        let t = (
            rng.gen_range(0..entities),
            rng.gen_range(0..relations),
            rng.gen_range(0..entities),
        );
        if seen.insert(t) {
            train.push((format!("e{}", t.0), format!("r{}", t.1), format!("e{}", t.2)));
        }
    }
    // make sure every entity appears at least once
    for e in 0..entities {
        let t = (e, 0, (e + 1) % entities);
        if seen.insert(t) {
            train.push((format!("e{}", t.0), format!("r{}", t.1), format!("e{}", t.2)));
        }
    }
    let valid: Vec<_> = train.iter().take(10).cloned().collect();
    TripleStore::from_named(&train, &valid, &[])
}

/// Roughly Gaussian entries (sum of four uniforms, centered) times `scale`.
pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> cat_core::Tensor64 {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| scale * ((0..4).map(|_| rng.gen::<f64>()).sum::<f64>() - 2.0))
        .collect();
    cat_core::Tensor64::new(shape.to_vec(), data).unwrap()
}
