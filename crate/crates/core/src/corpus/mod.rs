//! Datasets, synthetic corpora and gold-label derivation.

mod chfinann;
mod dataset;
pub mod labels;
mod stats;
mod synth;

pub use crate::ontology::derive_relation_schema;
pub use chfinann::{chfinann_ontology, ingest_chfinann, parse_chfinann, OTHER_ENTITY_TYPE};
pub use dataset::{
    document_to_json, ingest_dataset, parse_document_line, read_dataset, save_dataset,
    write_dataset, Dataset, Limits,
};
pub use labels::{
    decode_bioes, derive_bioes_tags, derive_edag_paths, derive_gold_relations, event_type_flags,
    record_relations, resolve_overlaps, single_label_targets, EdagTree, GoldLabels, TagKind,
    TagSet, TaggedSpan,
};
pub use stats::{
    corpus_statistics, document_scatter, record_scatter, relation_statistics, CorpusStatistics,
    RelationStatistics,
};
pub use synth::{
    entity_surface_tokens, generate_splits, generate_synthetic_corpus, quota_counts,
    role_cue_token, trigger_token, SynthConfig,
};
