//! Mini-batch training of a [`KgModel`] with AdamW, plateau learning-rate
//! reduction, entropy-weight annealing and best-validation model selection.

mod config;
mod export;
mod optim;
mod schedule;

pub use config::{TrainConfig, CONFIG_KEYS};
pub use export::{export_routing, read_routing_export, RoutingRow, RoutingSummary, ROUTING_HEADER};
pub use optim::{clip_grad_norm, AdamW, OptimizerState};
pub use schedule::{anneal_lambda, lambda_at, PlateauScheduler};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::ParamTree;
use crate::error::{Error, Result};
use crate::kg::{evaluate, routing_entropy, smoothed_ce_loss, total_loss, KgModel, Metrics, Split, TripleStore};
use crate::scalar::Real;
use crate::tensor::{Graph, Tensor};

/// One line of the epoch log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// batch-size-weighted mean of the total loss over the epoch
    pub train_loss: f64,
    /// the cross-entropy part of `train_loss`
    pub train_ce: f64,
    pub valid_mrr: f64,
    pub valid_hits_at_10: f64,
    /// learning rate used during the epoch
    pub lr: f64,
    /// entropy weight used during the epoch
    pub lambda_ent: f64,
    /// mean routing weights over the epoch's training tokens
    pub alpha_mean: Option<[f64; 3]>,
}

pub struct TrainOutcome<T> {
    /// parameters from the epoch with the best validation MRR
    pub model: KgModel<T>,
    pub best_epoch: usize,
    pub best_valid: Metrics,
    pub log: Vec<EpochRecord>,
}

impl TrainConfig {
    pub fn adamw(&self) -> AdamW {
        AdamW {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// Loss, gradients and routing statistics of one mini-batch.
pub struct BatchResult<T> {
    pub loss: f64,
    /// smoothed cross-entropy alone
    pub ce: f64,
    pub grads: Vec<Tensor<T>>,
    /// column sums of routing weights over the batch
    pub alpha_sum: Option<[f64; 3]>,
}

/// Forward and backward pass of one training batch. Gradients follow the
/// order of `model.params.named()`.
pub fn batch_gradients<T: Real>(
    model: &KgModel<T>,
    batch: &[crate::kg::Triple],
    config: &TrainConfig,
    lambda: f64,
    rng: &mut ChaCha8Rng,
) -> Result<BatchResult<T>> {
    let mut g = Graph::new();
    let p = model.bind(&mut g);
    let heads: Vec<usize> = batch.iter().map(|t| t.head).collect();
    let rels: Vec<usize> = batch.iter().map(|t| t.relation).collect();
    let tails: Vec<usize> = batch.iter().map(|t| t.tail).collect();
    let fwd = model.forward(&mut g, &p, &heads, &rels, true, rng)?;
    let ce = smoothed_ce_loss(&mut g, fwd.logits, &tails, config.label_smoothing)?;
    let loss = match fwd.alpha {
        Some(alpha) if lambda > 0.0 => {
            let ent = routing_entropy(&mut g, alpha);
            total_loss(&mut g, ce, ent, lambda, config.entropy_sign)?
        }
        _ => ce,
    };
    let alpha_sum = fwd.alpha.map(|a| {
        let mut s = [0.0; 3];
        for row in g.value(a).rows() {
            for (acc, &x) in s.iter_mut().zip(row) {
                *acc += x.as_f64();
            }
        }
        s
    });
    let value = g.value(loss).item()?.as_f64();
    let ce_value = g.value(ce).item()?.as_f64();
    let mut grads = g.backward(loss)?;
    let grads = p
        .named()
        .into_iter()
        .map(|(name, &v)| {
            grads
                .take(v)
                .ok_or_else(|| Error::InvalidShape(format!("no gradient for parameter '{name}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchResult {
        loss: value,
        ce: ce_value,
        grads,
        alpha_sum,
    })
}

/// Trains a freshly initialized model on the train split.
pub fn train<T: Real>(store: &TripleStore, config: &TrainConfig) -> Result<TrainOutcome<T>> {
    train_with(store, config, |_| Ok(()))
}

/// As [`train`], calling `on_epoch` after each epoch's record is complete.
pub fn train_with<T: Real>(
    store: &TripleStore,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let mut triples = store.split(Split::Train).to_vec();
    if triples.is_empty() {
        return Err(Error::InvalidConfig("training split is empty".into()));
    }
    if store.split(Split::Valid).is_empty() {
        return Err(Error::InvalidConfig("validation split is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = KgModel::<T>::init(
        config.model_config(store.num_entities(), store.num_relations()),
        &mut rng,
    )?;
    let routed = model.variant().is_routed();
    let hp = config.adamw();
    let mut state = OptimizerState::new(model.params.named().into_iter().map(|(_, t)| t), config.lr);
    let mut plateau = PlateauScheduler::new(config.plateau_factor, config.plateau_patience);
    let mut lambda = if routed { config.lambda_ent_init } else { 0.0 };

    let mut best: Option<(usize, Metrics, KgModel<T>)> = None;
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        triples.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut ce_sum = 0.0;
        let mut alpha_sum = [0.0; 3];
        for (bi, batch) in triples.chunks(config.batch_size).enumerate() {
            let mut res = batch_gradients(&model, batch, config, lambda, &mut rng)?;
            if !res.loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss {} at epoch {epoch}, batch {}",
                    res.loss,
                    bi + 1
                )));
            }
            if config.grad_clip > 0.0 {
                clip_grad_norm(&mut res.grads, config.grad_clip);
            }
            state.step(&hp, model.params.named_mut(), &res.grads)?;
            loss_sum += res.loss * batch.len() as f64;
            ce_sum += res.ce * batch.len() as f64;
            if let Some(s) = res.alpha_sum {
                alpha_sum.iter_mut().zip(s).for_each(|(a, b)| *a += b);
            }
        }
        let n = triples.len() as f64;
        let valid = evaluate(store, &model, Split::Valid)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            train_ce: ce_sum / n,
            valid_mrr: valid.mrr,
            valid_hits_at_10: valid.hits_at_10,
            lr: state.lr,
            lambda_ent: lambda,
            alpha_mean: routed.then(|| alpha_sum.map(|a| a / n)),
        };
        on_epoch(&record)?;
        log.push(record);

        if best.as_ref().is_none_or(|(_, m, _)| valid.mrr > m.mrr) {
            best = Some((epoch, valid, model.clone()));
        }
        state.lr = plateau.observe(valid.mrr, state.lr);
        if routed {
            lambda = anneal_lambda(lambda, config.lambda_ent_decay, config.lambda_ent_min);
        }
    }
    let (best_epoch, best_valid, model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        best_epoch,
        best_valid,
        log,
    })
}
