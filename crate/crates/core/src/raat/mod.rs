//! Dependency tensors and the relation-augmented attention encoder.

mod dependency;
mod encoder;
mod gradsuite;

pub use dependency::{
    build_dependency_tensor, channel_count, channel_name, check_invariants, document_nodes,
    DependencyTensor, Node, CO_EXISTENCE, CO_REFERENCE, CO_RELATION, NA,
};
pub use encoder::{raat_encode, RaatEncoder, RaatLayer};
pub use gradsuite::{
    gradient_suite, SuiteCheck, SuiteDims, GRADIENT_COMPONENTS, GRADIENT_TOLERANCE,
};
