//! The run configuration every command reads.

use std::path::{Path, PathBuf};

use redee::corpus::{Limits, SynthConfig};
use redee::ontology::EventOntology;
use redee::pipeline::{ModelConfig, TrainingConfig};
use redee::{Error, Result};
use serde::{Deserialize, Serialize};

pub const RUN_CONFIG_VERSION: u32 = 1;

/// Dataset locations used when a command is not given explicit paths.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

/// Everything a command needs to be rerun. `seed` overrides the generator and training seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    /// Ontology JSON file; the built-in equity ontology when absent.
    pub ontology: Option<PathBuf>,
    pub data: DataPaths,
    /// Train/dev/test document counts for `gen-data`.
    pub split_sizes: [usize; 3],
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let training = TrainingConfig::default();
        RunConfig {
            version: RUN_CONFIG_VERSION,
            seed: training.seed,
            ontology: None,
            data: DataPaths::default(),
            split_sizes: [500, 100, 100],
            synth: SynthConfig::default(),
            model: ModelConfig::default(),
            training,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if cfg.version != RUN_CONFIG_VERSION {
            return Err(Error::Config(format!(
                "{}: config version {} is not supported (expected {RUN_CONFIG_VERSION})",
                path.display(),
                cfg.version
            )));
        }
        Ok(cfg)
    }

    /// Applies the global seed to every seeded component.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.synth.seed = seed;
        self.training.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.training.validate()
    }

    pub fn ontology(&self) -> Result<EventOntology> {
        match &self.ontology {
            Some(p) => EventOntology::load(p),
            None => Ok(EventOntology::equity_default()),
        }
    }

    pub fn limits(&self) -> Limits {
        Limits {
            max_sentences: self.model.max_sentences,
            max_sentence_len: self.model.max_sentence_len,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run config serializes")
    }
}
