use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::attention::{cat_block, BlockConfig, BlockOutput, CatBlockParams, ParamTree, Variant};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{read_checkpoint, write_checkpoint, xavier_uniform_with, Graph, Tensor, Var};

/// Dropout probabilities at the three sites of the scoring pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropoutConfig {
    pub entity: f64,
    pub relation: f64,
    pub composite: f64,
}

impl Default for DropoutConfig {
    fn default() -> Self {
        Self {
            entity: 0.2,
            relation: 0.2,
            composite: 0.2,
        }
    }
}

impl DropoutConfig {
    pub fn uniform(p: f64) -> Self {
        Self {
            entity: p,
            relation: p,
            composite: p,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub block: BlockConfig,
    pub dropout: DropoutConfig,
    pub num_entities: usize,
    pub num_relations: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.block.validate()?;
        for (site, p) in [
            ("entity", self.dropout.entity),
            ("relation", self.dropout.relation),
            ("composite", self.dropout.composite),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{site} dropout {p} not in [0, 1)")));
            }
        }
        if self.num_entities < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 entities, got {}",
                self.num_entities
            )));
        }
        if self.num_relations == 0 {
            return Err(Error::InvalidConfig("need at least 1 relation".into()));
        }
        Ok(())
    }
}

/// Embedding tables plus block parameters, generic over the handle type.
#[derive(Clone, Debug, PartialEq)]
pub struct KgParams<P> {
    pub entity: P,
    pub relation: P,
    pub block: CatBlockParams<P>,
}

impl<P> KgParams<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> KgParams<Q> {
        KgParams {
            entity: f(&self.entity),
            relation: f(&self.relation),
            block: self.block.map(f),
        }
    }
}

impl<P> ParamTree<P> for KgParams<P> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a P)>) {
        debug_assert!(prefix.is_empty());
        out.push(("entity_emb".into(), &self.entity));
        out.push(("relation_emb".into(), &self.relation));
        self.block.collect("block", out);
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut P)>) {
        debug_assert!(prefix.is_empty());
        out.push(("entity_emb".into(), &mut self.entity));
        out.push(("relation_emb".into(), &mut self.relation));
        self.block.collect_mut("block", out);
    }
}

/// Whether the routing entropy is subtracted from (rewarding spread-out
/// routing) or added to the cross-entropy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropySign {
    #[default]
    Subtract,
    Add,
}

impl EntropySign {
    pub fn name(self) -> &'static str {
        match self {
            EntropySign::Subtract => "subtract",
            EntropySign::Add => "add",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "subtract" => Ok(EntropySign::Subtract),
            "add" => Ok(EntropySign::Add),
            _ => Err(Error::InvalidConfig(format!("unknown entropy sign '{s}' (subtract, add)"))),
        }
    }
}

/// `Drop(h + r)`: elementwise sum followed by inverted dropout.
pub fn compose<T: Real, R: Rng + ?Sized>(
    g: &mut Graph<T>,
    h: Var,
    r: Var,
    p: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    let x = g.add(h, r)?;
    g.dropout(x, p, training, rng)
}

/// Label-smoothed cross-entropy averaged over the batch.
pub fn smoothed_ce_loss<T: Real>(g: &mut Graph<T>, logits: Var, targets: &[usize], eps: f64) -> Result<Var> {
    g.smoothed_cross_entropy(logits, targets, T::lit(eps))
}

/// Mean per-token Shannon entropy of routing weights `[.., 3]`.
pub fn routing_entropy<T: Real>(g: &mut Graph<T>, alpha: Var) -> Var {
    g.entropy(alpha)
}

/// `ce ∓ λ·entropy` according to `sign`.
pub fn total_loss<T: Real>(g: &mut Graph<T>, ce: Var, entropy: Var, lambda: f64, sign: EntropySign) -> Result<Var> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("entropy weight {lambda} must be nonnegative")));
    }
    let term = g.scale(entropy, T::lit(lambda));
    match sign {
        EntropySign::Subtract => g.sub(ce, term),
        EntropySign::Add => g.add(ce, term),
    }
}

/// Graph handles produced by one forward pass.
pub struct Forward {
    /// scores against every entity, `[B, |E|]`
    pub logits: Var,
    /// routing weights `[B, 1, 3]` for the routed variant
    pub alpha: Option<Var>,
    pub block: BlockOutput,
}

/// Link-prediction model: entity and relation tables and one block.
#[derive(Clone, Debug, PartialEq)]
pub struct KgModel<T> {
    pub params: KgParams<Tensor<T>>,
    pub config: ModelConfig,
}

impl<T: Real> KgModel<T> {
    /// Xavier-uniform embeddings and block weights drawn from `rng`.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.block.d;
        let entity = xavier_uniform_with(&[config.num_entities, d], rng)?;
        let relation = xavier_uniform_with(&[config.num_relations, d], rng)?;
        let block = CatBlockParams::init(&config.block, rng)?;
        Ok(Self {
            params: KgParams { entity, relation, block },
            config,
        })
    }

    pub fn variant(&self) -> Variant {
        self.config.block.variant
    }

    pub fn num_params(&self) -> usize {
        self.params.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Registers all parameters as tracked leaves.
    pub fn bind(&self, g: &mut Graph<T>) -> KgParams<Var> {
        self.params.map(&mut |t| g.param(t.clone()))
    }

    /// Registers all parameters as constants.
    pub fn bind_constant(&self, g: &mut Graph<T>) -> KgParams<Var> {
        self.params.map(&mut |t| g.constant(t.clone()))
    }

    /// Scores `(heads[i], relations[i], ·)` against every entity. The
    /// composed vector enters the block as a single-token sequence.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<T>,
        p: &KgParams<Var>,
        heads: &[usize],
        relations: &[usize],
        training: bool,
        rng: &mut R,
    ) -> Result<Forward> {
        if heads.len() != relations.len() {
            return Err(crate::error::shape_err!(
                "{} heads for {} relations",
                heads.len(),
                relations.len()
            ));
        }
        let drop = self.config.dropout;
        let d = self.config.block.d;
        let h = g.gather(p.entity, heads)?;
        let h = g.dropout(h, drop.entity, training, rng)?;
        let r = g.gather(p.relation, relations)?;
        let r = g.dropout(r, drop.relation, training, rng)?;
        let x = compose(g, h, r, drop.composite, training, rng)?;
        let x = g.reshape(x, &[heads.len(), 1, d])?;
        let block = cat_block(g, x, &p.block, &self.config.block)?;
        let y = g.reshape(block.y, &[heads.len(), d])?;
        let logits = g.matmul_nt(y, p.entity)?;
        Ok(Forward {
            logits,
            alpha: block.alpha,
            block,
        })
    }

    /// Eval-mode scores, `[pairs.len(), |E|]`.
    pub fn score_batch(&self, pairs: &[(usize, usize)]) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p = self.bind_constant(&mut g);
        let heads: Vec<usize> = pairs.iter().map(|&(h, _)| h).collect();
        let rels: Vec<usize> = pairs.iter().map(|&(_, r)| r).collect();
        let fwd = self.forward(&mut g, &p, &heads, &rels, false, &mut NoRng)?;
        Ok(g.value(fwd.logits).clone())
    }

    /// Eval-mode scores of `(h, r, ·)` against every entity.
    pub fn score_all_tails(&self, head: usize, relation: usize) -> Result<Vec<T>> {
        Ok(self.score_batch(&[(head, relation)])?.into_data())
    }

    /// Eval-mode routing weights, one `[α_E, α_H, α_S]` per pair.
    pub fn routing_weights(&self, pairs: &[(usize, usize)]) -> Result<Vec<[T; 3]>> {
        if !self.variant().is_routed() {
            return Err(Error::UnsupportedVariant(format!(
                "variant '{}' has no router",
                self.variant()
            )));
        }
        let mut g = Graph::new();
        let p = self.bind_constant(&mut g);
        let heads: Vec<usize> = pairs.iter().map(|&(h, _)| h).collect();
        let rels: Vec<usize> = pairs.iter().map(|&(_, r)| r).collect();
        let fwd = self.forward(&mut g, &p, &heads, &rels, false, &mut NoRng)?;
        let alpha = fwd.alpha.expect("routed variant yields weights");
        Ok(g.value(alpha).rows().map(|r| [r[0], r[1], r[2]]).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_checkpoint(path, &self.params.named())
    }

    /// Loads weights saved by [`KgModel::save`] into the layout implied by
    /// `config`. Any missing, extra or reshaped tensor is an incompatibility.
    pub fn load(path: &Path, config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let stored: HashMap<String, Tensor<T>> = read_checkpoint::<T>(path)?.into_iter().collect();
        let entity_rows = stored.get("entity_emb").map(|t| t.shape()[0]);
        if entity_rows != Some(config.num_entities) {
            return Err(Error::Incompatible(format!(
                "checkpoint has {entity_rows:?} entity rows, dataset has {}",
                config.num_entities
            )));
        }
        let relation_rows = stored.get("relation_emb").map(|t| t.shape()[0]);
        if relation_rows != Some(config.num_relations) {
            return Err(Error::Incompatible(format!(
                "checkpoint has {relation_rows:?} relation rows, dataset has {}",
                config.num_relations
            )));
        }
        let mut model = Self::init(config, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))?;
        let mut seen = 0;
        for (name, slot) in model.params.named_mut() {
            let t = stored
                .get(&name)
                .ok_or_else(|| Error::Incompatible(format!("checkpoint lacks tensor '{name}'")))?;
            if t.shape() != slot.shape() {
                return Err(Error::Incompatible(format!(
                    "tensor '{name}' has shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t.clone();
            seen += 1;
        }
        if seen != stored.len() {
            return Err(Error::Incompatible(format!(
                "checkpoint holds {} tensors, model expects {seen}",
                stored.len()
            )));
        }
        Ok(model)
    }
}

/// Rng for eval-mode forwards, where dropout never draws.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("eval-mode forward drew a random number")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("eval-mode forward drew a random number")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("eval-mode forward drew a random number")
    }
    fn try_fill_bytes(&mut self, _: &mut [u8]) -> std::result::Result<(), rand::Error> {
        unreachable!("eval-mode forward drew a random number")
    }
}
