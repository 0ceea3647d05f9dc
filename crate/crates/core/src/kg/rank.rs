use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::KgModel;
use super::store::{Split, Triple, TripleStore};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Pairs scored per forward pass during evaluation.
const EVAL_CHUNK: usize = 128;

/// Rank of `target` among `scores`, ignoring the candidates in `filtered`
/// (other than the target itself). Ties count against the target. A NaN
/// target score ranks below every remaining candidate.
pub fn rank_in_scores<T: Real>(scores: &[T], target: usize, filtered: Option<&HashSet<usize>>) -> usize {
    let st = scores[target];
    let skip = |j: usize| j == target || filtered.is_some_and(|f| f.contains(&j));
    let above = scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| !skip(j) && (st.is_nan() || s >= st))
        .count();
    1 + above
}

pub fn unfiltered_rank_in_scores<T: Real>(scores: &[T], target: usize) -> usize {
    rank_in_scores(scores, target, None)
}

/// Filtered rank of the tail of `triple` under `model`.
pub fn filtered_rank<T: Real>(store: &TripleStore, model: &KgModel<T>, triple: Triple) -> Result<usize> {
    let scores = model.score_all_tails(triple.head, triple.relation)?;
    if triple.tail >= scores.len() {
        return Err(Error::Lookup(format!("tail {} out of {} entities", triple.tail, scores.len())));
    }
    Ok(rank_in_scores(&scores, triple.tail, store.known_tails(triple.head, triple.relation)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mrr: f64,
    pub hits_at_10: f64,
    pub n_evaluated: usize,
}

impl Metrics {
    pub fn from_ranks(ranks: &[usize]) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::InvalidConfig("cannot compute metrics over zero ranks".into()));
        }
        let n = ranks.len() as f64;
        let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
        let hits = ranks.iter().filter(|&&r| r <= 10).count() as f64 / n;
        Ok(Self {
            mrr,
            hits_at_10: hits,
            n_evaluated: ranks.len(),
        })
    }
}

/// Filtered ranks of every triple in `split`, in split order.
pub fn split_ranks<T: Real>(store: &TripleStore, model: &KgModel<T>, split: Split) -> Result<Vec<usize>> {
    let triples = store.split(split);
    if triples.is_empty() {
        return Err(Error::InvalidConfig(format!("split '{split}' is empty")));
    }
    let chunks: Vec<Vec<usize>> = triples
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let pairs: Vec<(usize, usize)> = chunk.iter().map(|t| (t.head, t.relation)).collect();
            let scores = model.score_batch(&pairs)?;
            chunk
                .iter()
                .zip(scores.rows())
                .map(|(t, row)| {
                    if t.tail >= row.len() {
                        return Err(Error::Lookup(format!("tail {} out of {} entities", t.tail, row.len())));
                    }
                    Ok(rank_in_scores(row, t.tail, store.known_tails(t.head, t.relation)))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(chunks.concat())
}

/// Filtered MRR and Hits@10 over `split` with dropout disabled.
pub fn evaluate<T: Real>(store: &TripleStore, model: &KgModel<T>, split: Split) -> Result<Metrics> {
    Metrics::from_ranks(&split_ranks(store, model, split)?)
}
