//! The four stages wired end to end, plus training and inference drivers.

pub mod config;
pub mod edag;
mod model;
mod train;
mod vocab;

pub use config::{combined_loss, ModelConfig, StageLosses, TrainingConfig};
pub use edag::{decode_event_type, OracleScorer, StepScorer, DEFAULT_BRANCH_CAP};
pub use model::{DocEntities, DocLoss, DocumentPrediction, PreparedDoc, ReDee};
pub use train::*;
pub use vocab::{token_shape, Vocab};
