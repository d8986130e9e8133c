use serde::{Deserialize, Serialize};

use crate::neural::checkpoint::config_hash;
use crate::neural::layers::BlockDims;
use crate::ontology::{
    EventOntology, Tokenization, DEFAULT_MAX_SENTENCES, DEFAULT_MAX_SENTENCE_LEN,
};
use crate::{Error, Result};

/// Architecture settings. Anything that changes parameter shapes or the forward pass lives here
/// and is covered by the checkpoint's config hash.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
    pub ffn: usize,
    pub heads: usize,
    pub eer_layers: usize,
    pub dre_layers: usize,
    pub raat1_layers: usize,
    pub raat2_layers: usize,
    pub max_sentences: usize,
    pub max_sentence_len: usize,
    pub tokenization: Tokenization,
    pub dropout: f64,
    /// Also set Co-relation entries tail→head.
    pub mirror_corelation: bool,
    /// Maximum simultaneously expanded paths per event type at inference.
    pub branch_cap: usize,
    /// Replace RAAT-1 (entity/sentence encoding) with a vanilla transformer.
    pub disable_raat1: bool,
    /// Replace RAAT-2 (record decoding) with a vanilla transformer.
    pub disable_raat2: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 64,
            ffn: 128,
            heads: 4,
            eer_layers: 2,
            dre_layers: 2,
            raat1_layers: 4,
            raat2_layers: 4,
            max_sentences: DEFAULT_MAX_SENTENCES,
            max_sentence_len: DEFAULT_MAX_SENTENCE_LEN,
            tokenization: Tokenization::Char,
            dropout: 0.0,
            mirror_corelation: false,
            branch_cap: 8,
            disable_raat1: false,
            disable_raat2: false,
        }
    }
}

impl ModelConfig {
    pub fn dims(&self) -> BlockDims {
        BlockDims {
            hidden: self.hidden,
            ffn: self.ffn,
            heads: self.heads,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.ffn == 0 || self.heads == 0 {
            return Err(Error::Config(
                "hidden, ffn and heads must be positive".into(),
            ));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.branch_cap == 0 {
            return Err(Error::Config("branch_cap must be at least 1".into()));
        }
        if self.max_sentence_len == 0 || self.max_sentences == 0 {
            return Err(Error::Config("sentence limits must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of this config and the ontology.
    pub fn hash(&self, ontology: &EventOntology) -> String {
        let canonical = serde_json::json!({ "model": self, "ontology": ontology });
        config_hash(&canonical.to_string())
    }
}

/// Optimisation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Weights of the entity, relation, event-type and argument losses.
    pub lambdas: [f64; 4],
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Gold tags, triples and paths feed downstream stages. When off, the encoder stage
    /// consumes predicted triples.
    pub teacher_forcing: bool,
    /// Sampled NA pairs per positive pair in the relation loss.
    pub negative_ratio: usize,
    /// Evaluate on the development set every this many epochs (the last epoch is always
    /// evaluated).
    pub eval_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lambdas: [0.05, 1.0, 0.05, 0.95],
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 1,
            epochs: 10,
            seed: 42,
            teacher_forcing: true,
            negative_ratio: 3,
            eval_every: 1,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::Config(format!(
                "loss weights must be non-negative: {:?}",
                self.lambdas
            )));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// The four stage losses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageLosses {
    pub ne: f64,
    pub dre: f64,
    pub pred: f64,
    pub a: f64,
}

impl StageLosses {
    pub fn as_array(&self) -> [f64; 4] {
        [self.ne, self.dre, self.pred, self.a]
    }
}

/// `λ1·L_ne + λ2·L_dre + λ3·L_pred + λ4·L_a`.
pub fn combined_loss(losses: &StageLosses, lambdas: &[f64; 4]) -> Result<f64> {
    let l = losses.as_array();
    if let Some(i) = l.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "stage loss {}",
            ["ne", "dre", "pred", "a"][i]
        )));
    }
    Ok(l.iter().zip(lambdas).map(|(l, w)| l * w).sum())
}
