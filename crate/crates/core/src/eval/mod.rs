//! Record-level scoring and the analysis protocols.

mod ablation;
mod matching;
mod report;

pub use ablation::{ablation_compare, AblationOutcome, ABLATION_VARIANTS};
pub use matching::{
    gold_surface_records, greedy_match, match_records, optimal_match, score_document, shared_args,
    Counts, RecordMatch, SurfaceRecord, EXACT_MATCH_LIMIT,
};
pub use report::{
    ablation_tsv, micro_prf, overall_tsv, quartile_tsv, scatter_quartiles, scatter_sets,
    single_multi_split, single_multi_tsv, AblationRow, EvalReport, Prf, TypeScore,
};
