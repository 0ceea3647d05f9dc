//! Knowledge-graph link prediction: triple ingestion, the embedding model
//! wrapped around a block, losses and filtered-ranking evaluation.

mod model;
mod rank;
mod store;

pub use model::{
    compose, routing_entropy, smoothed_ce_loss, total_loss, DropoutConfig, EntropySign, Forward, KgModel, KgParams,
    ModelConfig,
};
pub use rank::{evaluate, filtered_rank, rank_in_scores, split_ranks, unfiltered_rank_in_scores, Metrics};
pub use store::{load_triples, Split, Triple, TripleStore};
