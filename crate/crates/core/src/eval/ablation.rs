//! Trains the RAAT ablation variants under one seed and tabulates them against the full model.

use super::{AblationRow, EvalReport};
use crate::corpus::Dataset;
use crate::ontology::EventOntology;
use crate::pipeline::{evaluate, train, ModelConfig, TrainingConfig};
use crate::Result;

/// Variant names with their `(disable_raat1, disable_raat2)` flags, full model first.
pub const ABLATION_VARIANTS: [(&str, bool, bool); 4] = [
    ("ReDEE", false, false),
    ("-RAAT-1", true, false),
    ("-RAAT-2", false, true),
    ("-RAAT-1&2", true, true),
];

#[derive(Clone, Debug)]
pub struct AblationOutcome {
    pub rows: Vec<AblationRow>,
    pub reports: Vec<EvalReport>,
}

/// Trains every variant from the same seed and configuration and scores it on `test`.
/// The RAAT flags already set in `model` are overridden per variant.
pub fn ablation_compare(
    train_set: &Dataset,
    dev: Option<&Dataset>,
    test: &Dataset,
    model: &ModelConfig,
    training: &TrainingConfig,
    ontology: &EventOntology,
) -> Result<AblationOutcome> {
    let mut rows = Vec::with_capacity(ABLATION_VARIANTS.len());
    let mut reports = Vec::with_capacity(ABLATION_VARIANTS.len());
    for (name, r1, r2) in ABLATION_VARIANTS {
        let cfg = ModelConfig {
            disable_raat1: r1,
            disable_raat2: r2,
            ..model.clone()
        };
        let outcome = train(train_set, dev, &cfg, training, ontology)?;
        let report = evaluate(&outcome.model, test)?.report;
        rows.push(AblationRow {
            variant: name.to_string(),
            micro: report.micro,
        });
        reports.push(report);
    }
    Ok(AblationOutcome { rows, reports })
}
