//! Multi-task training, batch inference and checkpoint I/O.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{combined_loss, ModelConfig, StageLosses, TrainingConfig};
use super::model::{DocumentPrediction, ReDee};
use super::vocab::Vocab;
use crate::corpus::Dataset;
use crate::eval::{gold_surface_records, micro_prf, score_document, Counts, EvalReport, Prf};
use crate::neural::{adam_step, AdamConfig, Checkpoint, Gradients, Tensor};
use crate::ontology::EventOntology;
use crate::{Error, Result};

/// One row of the per-epoch metric log. Losses are means over the epoch's documents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub losses: StageLosses,
    pub dev: Option<Prf>,
}

pub const METRICS_HEADER: &str = "epoch\tL_ne\tL_dre\tL_pred\tL_a\tdev_P\tdev_R\tdev_F1";

pub fn metrics_row(log: &EpochLog) -> String {
    let l = log.losses;
    let dev = match &log.dev {
        Some(p) => format!("{:.4}\t{:.4}\t{:.4}", p.precision, p.recall, p.f1),
        None => "-\t-\t-".to_string(),
    };
    format!(
        "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{dev}",
        log.epoch, l.ne, l.dre, l.pred, l.a
    )
}

pub fn metrics_tsv(logs: &[EpochLog]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for l in logs {
        out.push_str(&metrics_row(l));
        out.push('\n');
    }
    out
}

pub struct TrainOutcome {
    pub model: ReDee,
    pub log: Vec<EpochLog>,
    /// Epoch whose parameters were kept (1-based).
    pub best_epoch: usize,
    pub best_dev: Option<EvalReport>,
}

/// Predictions and scores on a dataset.
pub struct Evaluation {
    pub predictions: Vec<DocumentPrediction>,
    pub doc_counts: Vec<Vec<Counts>>,
    pub report: EvalReport,
}

fn doc_seed(seed: u64, epoch: usize, doc: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (doc as u64 + 1).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

/// Trains a fresh model. The vocabulary comes from `train`; parameters are initialised from the
/// training seed. When `dev` is given the parameters of the epoch with the best dev micro-F1
/// (earliest on ties) are kept, otherwise those of the last epoch.
pub fn train(
    train: &Dataset,
    dev: Option<&Dataset>,
    model_config: &ModelConfig,
    config: &TrainingConfig,
    ontology: &EventOntology,
) -> Result<TrainOutcome> {
    train_with_callback(train, dev, model_config, config, ontology, &mut |_| Ok(()))
}

/// [`train`] with a hook called after every epoch (used to append metric rows as they appear).
pub fn train_with_callback(
    train: &Dataset,
    dev: Option<&Dataset>,
    model_config: &ModelConfig,
    config: &TrainingConfig,
    ontology: &EventOntology,
    on_epoch: &mut dyn FnMut(&EpochLog) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let vocab = Vocab::build(&train.docs);
    let mut model = ReDee::new(model_config.clone(), ontology.clone(), vocab, config.seed)?;
    let prepared: Vec<_> = train.docs.iter().map(|d| model.prepare(d)).collect();
    let adam = AdamConfig {
        lr: config.lr,
        beta1: config.beta1,
        beta2: config.beta2,
        eps: config.eps,
    };
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Vec<Tensor<f64>>, EvalReport)> = None;
    let ids: Vec<_> = model.store.ids().collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sums = [0.0f64; 4];
        for (batch_index, batch) in order.chunks(config.batch_size).enumerate() {
            let diverged = |msg: String| Error::Diverged {
                epoch,
                batch: batch_index + 1,
                msg,
            };
            let results: Vec<Result<_>> = batch
                .par_iter()
                .map(|&i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(doc_seed(config.seed, epoch, i));
                    model.document_loss(
                        &prepared[i],
                        &config.lambdas,
                        config.negative_ratio,
                        config.teacher_forcing,
                        &mut rng,
                    )
                })
                .collect();
            let mut total = Gradients::new(model.store.len());
            for (r, &i) in results.into_iter().zip(batch) {
                let dl = r.map_err(|e| {
                    diverged(format!("document {}: {e}", train.docs[i].document.doc_id))
                })?;
                combined_loss(&dl.losses, &config.lambdas).map_err(|e| diverged(e.to_string()))?;
                for (s, v) in sums.iter_mut().zip(dl.losses.as_array()) {
                    *s += v;
                }
                total.merge(&dl.grads);
            }
            model.store.accumulate(&total, 1.0 / batch.len() as f64);
            adam_step(&mut model.store, &adam).map_err(|e| diverged(e.to_string()))?;
        }
        let n = prepared.len() as f64;
        let losses = StageLosses {
            ne: sums[0] / n,
            dre: sums[1] / n,
            pred: sums[2] / n,
            a: sums[3] / n,
        };
        let evaluate_now = epoch % config.eval_every == 0 || epoch == config.epochs;
        let dev_report = match dev {
            Some(d) if evaluate_now => Some(evaluate(&model, d)?.report),
            _ => None,
        };
        if let Some(rep) = &dev_report {
            let improved = best.as_ref().is_none_or(|(f, ..)| rep.micro.f1 > *f);
            if improved {
                let snapshot = ids
                    .iter()
                    .map(|&id| model.store.value(id).clone())
                    .collect();
                best = Some((rep.micro.f1, epoch, snapshot, rep.clone()));
            }
        }
        let row = EpochLog {
            epoch,
            losses,
            dev: dev_report.map(|r| r.micro),
        };
        on_epoch(&row)?;
        log.push(row);
    }
    let (best_epoch, best_dev) = match best {
        Some((_, epoch, snapshot, report)) => {
            for (&id, v) in ids.iter().zip(snapshot) {
                *model.store.value_mut(id) = v;
            }
            (epoch, Some(report))
        }
        None => (config.epochs, None),
    };
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        best_dev,
    })
}

/// Runs inference over every document (in parallel over frozen parameters) and scores it.
pub fn evaluate(model: &ReDee, dataset: &Dataset) -> Result<Evaluation> {
    let predictions = predict_dataset(model, dataset)?;
    let types = model.ontology.event_types.len();
    let doc_counts: Vec<Vec<Counts>> = dataset
        .docs
        .par_iter()
        .zip(&predictions)
        .map(|(doc, p)| {
            let gold = gold_surface_records(doc, model.config.tokenization);
            score_document(&p.surface_records, &gold, types)
        })
        .collect();
    let names: Vec<String> = model
        .ontology
        .event_types
        .iter()
        .map(|e| e.name.clone())
        .collect();
    let report = micro_prf(&doc_counts, &names);
    Ok(Evaluation {
        predictions,
        doc_counts,
        report,
    })
}

pub fn predict_dataset(model: &ReDee, dataset: &Dataset) -> Result<Vec<DocumentPrediction>> {
    dataset.docs.par_iter().map(|d| model.predict(d)).collect()
}

/// JSON line for one prediction: `{"doc_id", "records": [{"event_type", "arguments": {role: surface}}]}`.
pub fn prediction_json(model: &ReDee, p: &DocumentPrediction) -> String {
    let records: Vec<serde_json::Value> = p
        .surface_records
        .iter()
        .map(|r| {
            let def = &model.ontology.event_types[r.event_type];
            let args: serde_json::Map<String, serde_json::Value> = def
                .roles
                .iter()
                .zip(&r.args)
                .map(|(role, a)| {
                    (
                        role.clone(),
                        a.clone().map_or(serde_json::Value::Null, Into::into),
                    )
                })
                .collect();
            serde_json::json!({ "event_type": def.name, "arguments": args })
        })
        .collect();
    serde_json::json!({ "doc_id": p.doc_id, "records": records }).to_string()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    model: ModelConfig,
    ontology: EventOntology,
    vocab: Vocab,
    #[serde(default)]
    training: Option<TrainingConfig>,
    /// Caller-level run configuration stored verbatim.
    #[serde(default)]
    run: Option<serde_json::Value>,
}

impl ReDee {
    /// Checkpoint keyed by the hash of the model config and ontology. The metadata carries
    /// everything needed to rebuild the model.
    pub fn to_checkpoint(&self, training: Option<&TrainingConfig>) -> Checkpoint {
        self.to_checkpoint_with_run(training, None)
    }

    /// [`ReDee::to_checkpoint`] that also embeds an arbitrary run configuration.
    pub fn to_checkpoint_with_run(
        &self,
        training: Option<&TrainingConfig>,
        run: Option<&serde_json::Value>,
    ) -> Checkpoint {
        let meta = CheckpointMeta {
            model: self.config.clone(),
            ontology: self.ontology.clone(),
            vocab: self.vocab.clone(),
            training: training.cloned(),
            run: run.cloned(),
        };
        let metadata = serde_json::to_string(&meta).expect("metadata serializes");
        Checkpoint::from_store(&self.store, self.config.hash(&self.ontology), metadata)
    }

    pub fn save(&self, path: &Path, training: Option<&TrainingConfig>) -> Result<()> {
        self.to_checkpoint(training).save(path)
    }

    /// Rebuilds a model from a checkpoint. With `expected`, the checkpoint's config hash must
    /// match that config unless `force` is set.
    pub fn from_checkpoint(
        ckpt: &Checkpoint,
        expected: Option<(&ModelConfig, &EventOntology)>,
        force: bool,
    ) -> Result<Self> {
        let meta = checkpoint_meta(ckpt)?;
        if let Some((cfg, ont)) = expected {
            ckpt.verify_hash(&cfg.hash(ont), force)?;
        }
        ckpt.verify_hash(&meta.model.hash(&meta.ontology), force)?;
        let mut model = ReDee::new(meta.model, meta.ontology, meta.vocab, 0)?;
        ckpt.restore_into(&mut model.store)?;
        Ok(model)
    }

    pub fn load(
        path: &Path,
        expected: Option<(&ModelConfig, &EventOntology)>,
        force: bool,
    ) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?, expected, force)
    }

    /// Training config recorded in a checkpoint, if any.
    pub fn checkpoint_training_config(ckpt: &Checkpoint) -> Result<Option<TrainingConfig>> {
        Ok(checkpoint_meta(ckpt)?.training)
    }

    /// Run configuration embedded with [`ReDee::to_checkpoint_with_run`], if any.
    pub fn checkpoint_run_config(ckpt: &Checkpoint) -> Result<Option<serde_json::Value>> {
        Ok(checkpoint_meta(ckpt)?.run)
    }
}

fn checkpoint_meta(ckpt: &Checkpoint) -> Result<CheckpointMeta> {
    serde_json::from_str(&ckpt.metadata).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))
}
