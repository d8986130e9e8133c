//! Relation-augmented document-level event extraction.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`ontology`]: event types, roles, documents and the derived relation schema.
//! * [`corpus`]: dataset ingestion, gold supervision derivation and the synthetic generator.
//! * [`neural`]: a small differentiable core (tensors, kernels, a tape, CRF, Adam, gradient checks).
//! * [`raat`]: dependency tensors and the relation-augmented attention encoder.
//! * [`pipeline`]: entity extraction, relation extraction, encoding, record generation and training.
//! * [`eval`]: record matching, micro P/R/F1 and the analysis/ablation harness.
//!
//! Numeric kernels are generic over [`Scalar`]; the trained pipeline runs in `f64`.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod neural;
pub mod ontology;
pub mod pipeline;
pub mod raat;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar type used by the trained pipeline.
pub type Real = f64;

pub type Tensor64 = neural::Tensor<f64>;
pub type Tensor32 = neural::Tensor<f32>;
pub type ParamStore64 = neural::ParamStore<f64>;
pub type ParamStore32 = neural::ParamStore<f32>;
pub type Graph64<'a> = neural::Graph<'a, f64>;
