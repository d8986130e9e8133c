//! Minimal differentiable numeric core.

pub mod checkpoint;
pub mod crf;
mod gradcheck;
mod graph;
pub mod layers;
pub mod ops;
mod params;
mod tensor;

pub use checkpoint::Checkpoint;
pub use crf::{crf_nll, crf_viterbi, CrfParams};
pub use gradcheck::{grad_check, grad_check_params, relative_error, GradCheckReport, ParamCheck};
pub use graph::{Graph, Var};
pub use ops::{biaffine_score, span_max_pool};
pub use params::{adam_step, AdamConfig, Gradients, ParamId, ParamStore, INIT_RANGE};
pub use tensor::Tensor;
