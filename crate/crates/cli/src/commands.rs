//! Command implementations. Progress goes to stderr; stdout carries results and paths.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use redee::corpus::{
    chfinann_ontology, corpus_statistics, derive_relation_schema, generate_splits, ingest_chfinann,
    ingest_dataset, relation_statistics, save_dataset, Dataset, Limits,
};
use redee::eval::{
    ablation_compare, ablation_tsv, overall_tsv, quartile_tsv, scatter_quartiles,
    single_multi_split, single_multi_tsv, ABLATION_VARIANTS,
};
use redee::neural::checkpoint::Checkpoint;
use redee::ontology::EventOntology;
use redee::pipeline::{
    evaluate, metrics_row, predict_dataset, prediction_json, train_with_callback, Evaluation,
    ModelConfig, ReDee, METRICS_HEADER,
};
use redee::raat::{gradient_suite, SuiteDims, GRADIENT_COMPONENTS, GRADIENT_TOLERANCE};
use redee::{Error, Result};

use crate::config::RunConfig;

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const METRICS_FILE: &str = "metrics.tsv";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const REPORT_FILE: &str = "report.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";

const DEFAULT_RUNS_DIR: &str = "runs";
const DEFAULT_DATA_DIR: &str = "data";

/// Creates `<root>/<UTC timestamp>-seed<seed>`, adding a counter if that name is taken.
fn create_run_dir(root: Option<&Path>, seed: u64) -> Result<PathBuf> {
    let root = root.unwrap_or(Path::new(DEFAULT_RUNS_DIR));
    fs::create_dir_all(root)?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = format!("{stamp}-seed{seed}");
    let mut dir = root.join(&base);
    let mut k = 1;
    while dir.exists() {
        dir = root.join(format!("{base}-{k}"));
        k += 1;
    }
    fs::create_dir(&dir)?;
    Ok(dir)
}

fn required(path: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.or_else(|| fallback.clone()).ok_or_else(|| {
        Error::Config(format!(
            "no {what} dataset given (flag or data.{what} in --config)"
        ))
    })
}

fn load(path: &Path, ontology: &EventOntology, limits: Limits) -> Result<Dataset> {
    let ds = ingest_dataset(path, ontology, limits)?;
    eprintln!("loaded {} documents from {}", ds.len(), path.display());
    Ok(ds)
}

fn model_limits(m: &ModelConfig) -> Limits {
    Limits {
        max_sentences: m.max_sentences,
        max_sentence_len: m.max_sentence_len,
    }
}

fn variant_name(m: &ModelConfig) -> &'static str {
    ABLATION_VARIANTS
        .iter()
        .find(|(_, r1, r2)| *r1 == m.disable_raat1 && *r2 == m.disable_raat2)
        .map_or("ReDEE", |v| v.0)
}

fn write_predictions(
    path: &Path,
    model: &ReDee,
    eval: &[redee::pipeline::DocumentPrediction],
) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    for p in eval {
        writeln!(f, "{}", prediction_json(model, p))?;
    }
    f.flush()?;
    Ok(())
}

/// Overall, scatter-quartile and single/multi tables, separated by `#` headings.
fn full_report(model: &ReDee, data: &Dataset, eval: &Evaluation) -> String {
    let names: Vec<String> = model
        .ontology
        .event_types
        .iter()
        .map(|e| e.name.clone())
        .collect();
    let q = scatter_quartiles(&data.docs, &eval.doc_counts, &names);
    let (s, m) = single_multi_split(&data.docs, &eval.doc_counts, &names);
    format!(
        "# overall\n{}\n# scatter quartiles\n{}\n# single vs multi\n{}",
        overall_tsv(&[(variant_name(&model.config), &eval.report)]),
        quartile_tsv(&q),
        single_multi_tsv(&s, &m, &eval.report)
    )
}

pub fn gen_data(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let ontology = cfg.ontology()?;
    let dir = out.unwrap_or(Path::new(DEFAULT_DATA_DIR));
    let splits = generate_splits(&cfg.synth, &ontology, cfg.split_sizes)?;
    fs::create_dir_all(dir)?;
    let mut files = serde_json::Map::new();
    let mut stats = serde_json::Map::new();
    for ds in &splits {
        let name = format!("{}.jsonl", ds.split);
        save_dataset(&dir.join(&name), ds, &ontology)?;
        let s = corpus_statistics(ds);
        eprintln!(
            "{}: {} docs, {} records, multi-event fraction {:.3}",
            ds.split, s.docs, s.records, s.multi_event_fraction
        );
        files.insert(ds.split.clone(), name.into());
        stats.insert(ds.split.clone(), serde_json::to_value(&s)?);
    }
    let manifest = serde_json::json!({
        "config": cfg,
        "files": files,
        "statistics": stats,
    });
    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    println!("{}", dir.display());
    Ok(())
}

pub fn stats(cfg: &RunConfig, paths: &[PathBuf], chfinann: bool, out: Option<&Path>) -> Result<()> {
    let ontology = if chfinann {
        chfinann_ontology()
    } else {
        cfg.ontology()?
    };
    let paths: Vec<PathBuf> = if paths.is_empty() {
        [&cfg.data.train, &cfg.data.dev, &cfg.data.test]
            .into_iter()
            .flatten()
            .cloned()
            .collect()
    } else {
        paths.to_vec()
    };
    if paths.is_empty() {
        return Err(Error::Config("no dataset files given".into()));
    }
    let sets = paths
        .iter()
        .map(|p| {
            if chfinann {
                ingest_chfinann(
                    p,
                    &ontology,
                    Limits {
                        max_sentences: usize::MAX,
                        max_sentence_len: usize::MAX,
                    },
                )
            } else {
                load(p, &ontology, cfg.limits())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Dataset> = sets.iter().collect();
    let tsv = relation_statistics(&refs, &derive_relation_schema(&ontology)).to_tsv();
    match out {
        Some(p) => fs::write(p, tsv)?,
        None => print!("{tsv}"),
    }
    Ok(())
}

pub fn train(
    cfg: &RunConfig,
    train: Option<PathBuf>,
    dev: Option<PathBuf>,
    out: Option<&Path>,
) -> Result<()> {
    let ontology = cfg.ontology()?;
    let train_path = required(train, &cfg.data.train, "train")?;
    let dev_path = dev.or_else(|| cfg.data.dev.clone());
    let train_set = load(&train_path, &ontology, cfg.limits())?;
    let dev_set = dev_path
        .as_deref()
        .map(|p| load(p, &ontology, cfg.limits()))
        .transpose()?;

    let mut effective = cfg.clone();
    effective.data.train = Some(train_path);
    effective.data.dev = dev_path;
    let dir = create_run_dir(out, cfg.seed)?;
    fs::write(dir.join(CONFIG_FILE), effective.to_json())?;
    let metrics_path = dir.join(METRICS_FILE);
    fs::write(&metrics_path, format!("{METRICS_HEADER}\n"))?;

    let outcome = train_with_callback(
        &train_set,
        dev_set.as_ref(),
        &cfg.model,
        &cfg.training,
        &ontology,
        &mut |log| {
            let row = metrics_row(log);
            eprintln!("{row}");
            let mut f = OpenOptions::new().append(true).open(&metrics_path)?;
            writeln!(f, "{row}")?;
            Ok(())
        },
    )?;
    eprintln!("kept epoch {}", outcome.best_epoch);
    let run_json = serde_json::to_value(&effective)?;
    outcome
        .model
        .to_checkpoint_with_run(Some(&cfg.training), Some(&run_json))
        .save(&dir.join(CHECKPOINT_FILE))?;
    if let Some(dev) = &dev_set {
        let ev = evaluate(&outcome.model, dev)?;
        write_predictions(&dir.join(PREDICTIONS_FILE), &outcome.model, &ev.predictions)?;
        fs::write(dir.join(REPORT_FILE), full_report(&outcome.model, dev, &ev))?;
    }
    println!("{}", dir.display());
    Ok(())
}

/// Loads a checkpoint, checking its hash against `cfg` when a config file was given.
fn load_model(
    cfg: &RunConfig,
    explicit_config: bool,
    checkpoint: &Path,
    force: bool,
) -> Result<(ReDee, RunConfig)> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let model = if explicit_config {
        let ontology = cfg.ontology()?;
        ReDee::from_checkpoint(&ckpt, Some((&cfg.model, &ontology)), force)?
    } else {
        ReDee::from_checkpoint(&ckpt, None, force)?
    };
    let mut run = ReDee::checkpoint_run_config(&ckpt)?
        .and_then(|v| serde_json::from_value::<RunConfig>(v).ok())
        .unwrap_or_else(|| cfg.clone());
    run.model = model.config.clone();
    Ok((model, run))
}

pub fn eval(
    cfg: &RunConfig,
    explicit_config: bool,
    checkpoint: &Path,
    data: Option<PathBuf>,
    force: bool,
    out: Option<&Path>,
) -> Result<()> {
    let (model, mut run) = load_model(cfg, explicit_config, checkpoint, force)?;
    let data_path = required(data, &cfg.data.test, "test")?;
    let ds = load(&data_path, &model.ontology, model_limits(&model.config))?;
    let ev = evaluate(&model, &ds)?;
    let report = full_report(&model, &ds, &ev);
    run.data.test = Some(data_path);
    let dir = create_run_dir(out, run.seed)?;
    fs::write(dir.join(CONFIG_FILE), run.to_json())?;
    write_predictions(&dir.join(PREDICTIONS_FILE), &model, &ev.predictions)?;
    fs::write(dir.join(REPORT_FILE), &report)?;
    eprint!("{report}");
    println!("{}", dir.display());
    Ok(())
}

pub fn predict(
    cfg: &RunConfig,
    explicit_config: bool,
    checkpoint: &Path,
    data: Option<PathBuf>,
    force: bool,
    out: Option<&Path>,
) -> Result<()> {
    let (model, mut run) = load_model(cfg, explicit_config, checkpoint, force)?;
    let data_path = required(data, &cfg.data.test, "test")?;
    let ds = load(&data_path, &model.ontology, model_limits(&model.config))?;
    let preds = predict_dataset(&model, &ds)?;
    match out {
        Some(root) => {
            run.data.test = Some(data_path);
            let dir = create_run_dir(Some(root), run.seed)?;
            fs::write(dir.join(CONFIG_FILE), run.to_json())?;
            write_predictions(&dir.join(PREDICTIONS_FILE), &model, &preds)?;
            println!("{}", dir.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            for p in &preds {
                writeln!(lock, "{}", prediction_json(&model, p))?;
            }
        }
    }
    Ok(())
}

pub fn ablate(
    cfg: &RunConfig,
    train: Option<PathBuf>,
    dev: Option<PathBuf>,
    test: Option<PathBuf>,
    out: Option<&Path>,
) -> Result<()> {
    let ontology = cfg.ontology()?;
    let train_path = required(train, &cfg.data.train, "train")?;
    let dev_path = dev.or_else(|| cfg.data.dev.clone());
    let test_path = required(
        test.or_else(|| cfg.data.test.clone())
            .or_else(|| dev_path.clone()),
        &None,
        "test",
    )?;
    let train_set = load(&train_path, &ontology, cfg.limits())?;
    let dev_set = dev_path
        .as_deref()
        .map(|p| load(p, &ontology, cfg.limits()))
        .transpose()?;
    let test_set = load(&test_path, &ontology, cfg.limits())?;

    let mut effective = cfg.clone();
    effective.data.train = Some(train_path);
    effective.data.dev = dev_path;
    effective.data.test = Some(test_path);
    let dir = create_run_dir(out, cfg.seed)?;
    fs::write(dir.join(CONFIG_FILE), effective.to_json())?;
    let outcome = ablation_compare(
        &train_set,
        dev_set.as_ref(),
        &test_set,
        &cfg.model,
        &cfg.training,
        &ontology,
    )?;
    let table = ablation_tsv(&outcome.rows);
    let rows: Vec<(&str, &redee::eval::EvalReport)> = outcome
        .rows
        .iter()
        .map(|r| r.variant.as_str())
        .zip(&outcome.reports)
        .collect();
    let report = format!("# ablation\n{table}\n# per type\n{}", overall_tsv(&rows));
    fs::write(dir.join(REPORT_FILE), &report)?;
    eprint!("{report}");
    println!("{}", dir.display());
    Ok(())
}

pub fn gradcheck(first_seed: u64, seeds: u64) -> Result<()> {
    let dims = SuiteDims::default();
    let checks = gradient_suite(first_seed..first_seed + seeds, dims)?;
    let mut overall = 0.0f64;
    let mut failed = Vec::new();
    for component in GRADIENT_COMPONENTS {
        let worst = checks
            .iter()
            .filter(|c| c.component == component)
            .map(|c| c.report.max_rel_err())
            .fold(0.0, f64::max);
        overall = overall.max(worst);
        let ok = worst <= GRADIENT_TOLERANCE;
        if !ok {
            failed.push(component);
        }
        println!(
            "{component:<18} seeds={seeds} max_rel_err={worst:.3e} {}",
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!("max_rel_err={overall:.3e} tolerance={GRADIENT_TOLERANCE:.0e}");
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::GradCheck(failed.join(", ")))
    }
}
