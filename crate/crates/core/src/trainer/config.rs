use serde::{Deserialize, Serialize};

use crate::attention::{BlockConfig, Variant};
use crate::error::{Error, Result};
use crate::kg::{DropoutConfig, EntropySign, ModelConfig};
use crate::tensor::Activation;

/// Every model and optimization hyperparameter of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: Variant,
    pub d: usize,
    pub heads: usize,
    pub ff_multiplier: usize,
    pub curvature: f64,
    pub activation: Activation,
    pub layer_norm_eps: f64,
    pub dropout: DropoutConfig,

    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub label_smoothing: f64,
    pub lambda_ent_init: f64,
    pub lambda_ent_decay: f64,
    pub lambda_ent_min: f64,
    pub entropy_sign: EntropySign,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    /// global gradient-norm cap; 0 disables clipping
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let block = BlockConfig::default();
        Self {
            variant: block.variant,
            d: block.d,
            heads: block.heads,
            ff_multiplier: block.ff_multiplier,
            curvature: block.curvature,
            activation: block.activation,
            layer_norm_eps: block.layer_norm_eps,
            dropout: DropoutConfig::default(),
            seed: 0,
            epochs: 200,
            batch_size: 512,
            lr: 1e-3,
            weight_decay: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            label_smoothing: 0.1,
            lambda_ent_init: 0.01,
            lambda_ent_decay: 0.95,
            lambda_ent_min: 0.001,
            entropy_sign: EntropySign::Subtract,
            plateau_factor: 0.5,
            plateau_patience: 10,
            grad_clip: 0.0,
        }
    }
}

/// Flat dotted keys accepted by [`TrainConfig::set`], in serialization order.
pub const CONFIG_KEYS: &[&str] = &[
    "model.variant",
    "model.d",
    "model.heads",
    "model.ff_multiplier",
    "model.curvature",
    "model.activation",
    "model.layer_norm_eps",
    "model.dropout.entity",
    "model.dropout.relation",
    "model.dropout.composite",
    "train.seed",
    "train.epochs",
    "train.batch_size",
    "train.lr",
    "train.weight_decay",
    "train.beta1",
    "train.beta2",
    "train.adam_eps",
    "train.label_smoothing",
    "train.lambda_ent_init",
    "train.lambda_ent_decay",
    "train.lambda_ent_min",
    "train.entropy_sign",
    "train.plateau_factor",
    "train.plateau_patience",
    "train.grad_clip",
];

fn parse_num<V: std::str::FromStr>(key: &str, value: &str) -> Result<V>
where
    V::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::InvalidConfig(format!("{key}: cannot parse '{value}': {e}")))
}

impl TrainConfig {
    /// Sets one flat key from its textual value. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "model.variant" => self.variant = Variant::parse(v)?,
            "model.d" => self.d = parse_num(key, v)?,
            "model.heads" => self.heads = parse_num(key, v)?,
            "model.ff_multiplier" => self.ff_multiplier = parse_num(key, v)?,
            "model.curvature" => self.curvature = parse_num(key, v)?,
            "model.activation" => {
                self.activation = Activation::parse(v)
                    .ok_or_else(|| Error::InvalidConfig(format!("{key}: unknown activation '{v}' (gelu, tanh)")))?
            }
            "model.layer_norm_eps" => self.layer_norm_eps = parse_num(key, v)?,
            "model.dropout.entity" => self.dropout.entity = parse_num(key, v)?,
            "model.dropout.relation" => self.dropout.relation = parse_num(key, v)?,
            "model.dropout.composite" => self.dropout.composite = parse_num(key, v)?,
            "train.seed" => self.seed = parse_num(key, v)?,
            "train.epochs" => self.epochs = parse_num(key, v)?,
            "train.batch_size" => self.batch_size = parse_num(key, v)?,
            "train.lr" => self.lr = parse_num(key, v)?,
            "train.weight_decay" => self.weight_decay = parse_num(key, v)?,
            "train.beta1" => self.beta1 = parse_num(key, v)?,
            "train.beta2" => self.beta2 = parse_num(key, v)?,
            "train.adam_eps" => self.adam_eps = parse_num(key, v)?,
            "train.label_smoothing" => self.label_smoothing = parse_num(key, v)?,
            "train.lambda_ent_init" => self.lambda_ent_init = parse_num(key, v)?,
            "train.lambda_ent_decay" => self.lambda_ent_decay = parse_num(key, v)?,
            "train.lambda_ent_min" => self.lambda_ent_min = parse_num(key, v)?,
            "train.entropy_sign" => self.entropy_sign = EntropySign::parse(v)?,
            "train.plateau_factor" => self.plateau_factor = parse_num(key, v)?,
            "train.plateau_patience" => self.plateau_patience = parse_num(key, v)?,
            "train.grad_clip" => self.grad_clip = parse_num(key, v)?,
            _ => return Err(Error::InvalidConfig(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Every key with its current value, in [`CONFIG_KEYS`] order. Floats use
    /// the shortest representation that parses back to the same value.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let values = [
            self.variant.name().to_string(),
            self.d.to_string(),
            self.heads.to_string(),
            self.ff_multiplier.to_string(),
            self.curvature.to_string(),
            self.activation.name().to_string(),
            self.layer_norm_eps.to_string(),
            self.dropout.entity.to_string(),
            self.dropout.relation.to_string(),
            self.dropout.composite.to_string(),
            self.seed.to_string(),
            self.epochs.to_string(),
            self.batch_size.to_string(),
            self.lr.to_string(),
            self.weight_decay.to_string(),
            self.beta1.to_string(),
            self.beta2.to_string(),
            self.adam_eps.to_string(),
            self.label_smoothing.to_string(),
            self.lambda_ent_init.to_string(),
            self.lambda_ent_decay.to_string(),
            self.lambda_ent_min.to_string(),
            self.entropy_sign.name().to_string(),
            self.plateau_factor.to_string(),
            self.plateau_patience.to_string(),
            self.grad_clip.to_string(),
        ];
        CONFIG_KEYS.iter().copied().zip(values).collect()
    }

    pub fn block_config(&self) -> BlockConfig {
        BlockConfig {
            variant: self.variant,
            d: self.d,
            heads: self.heads,
            ff_multiplier: self.ff_multiplier,
            curvature: self.curvature,
            activation: self.activation,
            layer_norm_eps: self.layer_norm_eps,
        }
    }

    pub fn model_config(&self, num_entities: usize, num_relations: usize) -> ModelConfig {
        ModelConfig {
            block: self.block_config(),
            dropout: self.dropout,
            num_entities,
            num_relations,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.block_config().validate()?;
        let unit = |name: &str, v: f64, lo_open: bool| -> Result<()> {
            let ok = if lo_open { v > 0.0 && v <= 1.0 } else { (0.0..=1.0).contains(&v) };
            if ok {
                Ok(())
            } else {
                let lo = if lo_open { "(0" } else { "[0" };
                Err(Error::InvalidConfig(format!("{name} = {v} not in {lo}, 1]")))
            }
        };
        unit("train.lr", self.lr, true)?;
        unit("train.weight_decay", self.weight_decay, false)?;
        unit("train.lambda_ent_decay", self.lambda_ent_decay, true)?;
        unit("train.plateau_factor", self.plateau_factor, true)?;
        unit("train.lambda_ent_init", self.lambda_ent_init, false)?;
        unit("train.lambda_ent_min", self.lambda_ent_min, false)?;
        for (name, v) in [
            ("model.dropout.entity", self.dropout.entity),
            ("model.dropout.relation", self.dropout.relation),
            ("model.dropout.composite", self.dropout.composite),
            ("train.label_smoothing", self.label_smoothing),
            ("train.beta1", self.beta1),
            ("train.beta2", self.beta2),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} = {v} not in [0, 1)")));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::InvalidConfig("train.adam_eps must be positive".into()));
        }
        if !(self.grad_clip >= 0.0) {
            return Err(Error::InvalidConfig("train.grad_clip must be nonnegative".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.plateau_patience == 0 {
            return Err(Error::InvalidConfig(
                "train.epochs, train.batch_size and train.plateau_patience must be at least 1".into(),
            ));
        }
        Ok(())
    }
}
