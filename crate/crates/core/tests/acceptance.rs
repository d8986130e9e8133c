//! Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and exits nonzero if any
//! criterion fails.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use redee::corpus::{
    chfinann_ontology, derive_edag_paths, derive_gold_relations, derive_relation_schema,
    generate_splits, generate_synthetic_corpus, ingest_chfinann, relation_statistics, Limits,
    SynthConfig,
};
use redee::eval::{
    ablation_compare, ablation_tsv, match_records, micro_prf, score_document, shared_args, Counts,
    Prf, SurfaceRecord,
};
use redee::neural::crf::{log_partition, path_score};
use redee::neural::layers::BlockDims;
use redee::neural::{Graph, ParamStore, Tensor};
use redee::ontology::{
    EntityMention, EventOntology, EventRecord, EventTypeDef, RelationSchema, RelationTriple,
    RelationType, Tokenization, ONTOLOGY_SCHEMA_VERSION,
};
use redee::pipeline::{
    combined_loss, decode_event_type, evaluate, train, ModelConfig, OracleScorer, StageLosses,
    TrainingConfig, DEFAULT_BRANCH_CAP,
};
use redee::raat::{
    build_dependency_tensor, channel_count, check_invariants, document_nodes, gradient_suite,
    RaatLayer, SuiteDims, CO_EXISTENCE, CO_REFERENCE, CO_RELATION, GRADIENT_TOLERANCE, NA,
};

const GRAD_SEEDS: u64 = 20;
const GRAD_BUDGET_SECS: f64 = 120.0;
const TENSOR_DOCS: usize = 200;
const REDUCTION_TOL: f64 = 1e-10;
const MAX_ROLES: usize = 12;
const CHFINANN_PLEDGER_SHARES: usize = 20002;
const ORACLE_DOCS: usize = 500;
const CRF_TOL: f64 = 1e-8;
const MATCH_CASES: usize = 1000;
const OVERFIT_DOCS: usize = 20;
const OVERFIT_EPOCHS: usize = 200;
const OVERFIT_F1: f64 = 0.95;
const DEV_F1: f64 = 0.80;
const UNIT_LOSS_TOTAL: f64 = 2.05;
const LINEARITY_TOL: f64 = 1e-12;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err(e: redee::Error) -> String {
    e.to_string()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let checks = gradient_suite(0..GRAD_SEEDS, SuiteDims::default()).map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    let worst = checks
        .iter()
        .max_by(|a, b| a.report.max_rel_err().total_cmp(&b.report.max_rel_err()))
        .expect("non-empty suite");
    let max = worst.report.max_rel_err();
    let detail = format!(
        "{} checks over {GRAD_SEEDS} seeds, max rel err {max:.2e} ({} seed {}), {secs:.1}s",
        checks.len(),
        worst.component,
        worst.seed
    );
    ensure(
        max <= GRADIENT_TOLERANCE,
        format!("{detail}; tolerance {GRADIENT_TOLERANCE:.0e}"),
    )?;
    ensure(
        secs < GRAD_BUDGET_SECS,
        format!("{detail}; budget {GRAD_BUDGET_SECS}s"),
    )?;
    Ok(detail)
}

fn one_cluster_schema() -> RelationSchema {
    RelationSchema {
        relation_types: vec![RelationType {
            event_type: 0,
            head_role: 0,
            tail_role: 2,
            name: "Pledger2Pledgee".into(),
        }],
        head_cluster: vec![0],
        cluster_names: vec!["Pledger".into()],
    }
}

fn mention(entity: usize, sentence: usize) -> EntityMention {
    EntityMention {
        sentence,
        start: 0,
        end: 1,
        entity,
    }
}

fn five_node_fixture() -> Result<(), String> {
    // Nodes: A in s0, A in s1, B in s1, then sentences s0 and s1; one relation A→B.
    let nodes = document_nodes(&[mention(0, 0), mention(0, 1), mention(1, 1)], 2);
    let triple = RelationTriple {
        head: 0,
        tail: 1,
        relation: 0,
    };
    let t =
        build_dependency_tensor(&nodes, &[triple], &one_cluster_schema(), 2, false).map_err(err)?;
    let mut expected = vec![
        (CO_REFERENCE, 0, 1),
        (CO_REFERENCE, 1, 0),
        (CO_EXISTENCE, 0, 3),
        (CO_EXISTENCE, 3, 0),
        (CO_EXISTENCE, 1, 4),
        (CO_EXISTENCE, 4, 1),
        (CO_EXISTENCE, 2, 4),
        (CO_EXISTENCE, 4, 2),
        (CO_RELATION, 0, 2),
        (CO_RELATION, 1, 2),
    ];
    let non_na: Vec<(usize, usize)> = expected.iter().map(|&(_, i, j)| (i, j)).collect();
    for i in 0..5 {
        for j in 0..5 {
            if !non_na.contains(&(i, j)) {
                expected.push((NA, i, j));
            }
        }
    }
    expected.sort_unstable();
    ensure(
        t.channels() == 4,
        format!("fixture has {} channels", t.channels()),
    )?;
    ensure(
        t.sparse_triples() == expected,
        "fixture tensor differs from the hand derivation",
    )
}

fn criterion_2() -> Outcome {
    let ontology = EventOntology::equity_default();
    let schema = derive_relation_schema(&ontology);
    let cfg = SynthConfig {
        num_docs: TENSOR_DOCS,
        seed: 2,
        ..SynthConfig::default()
    };
    let ds = generate_synthetic_corpus(&cfg, &ontology).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut entries = 0usize;
    for doc in &ds.docs {
        let nodes = document_nodes(&doc.mentions(), doc.document.num_sentences());
        let gold: Vec<RelationTriple> = derive_gold_relations(&doc.records, &schema)
            .into_iter()
            .collect();
        // The gold triples, then a random subset of them.
        let subset: Vec<RelationTriple> =
            gold.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
        for triples in [&gold, &subset] {
            let t = build_dependency_tensor(&nodes, triples, &schema, doc.entities.len(), false)
                .map_err(err)?;
            ensure(
                t.channels() == 3 + schema.num_clusters() && t.channels() == channel_count(&schema),
                format!("{}: {} channels", doc.document.doc_id, t.channels()),
            )?;
            let v = check_invariants(&t, &nodes);
            ensure(
                v.is_empty(),
                format!("{}: {}", doc.document.doc_id, v.join("; ")),
            )?;
            entries += t.sparse_triples().len();
        }
    }
    five_node_fixture()?;
    Ok(format!(
        "{TENSOR_DOCS} documents x 2 triple sets, {entries} entries, all invariants hold; 5-node fixture exact"
    ))
}

fn criterion_3() -> Outcome {
    let dims = BlockDims {
        hidden: 8,
        ffn: 16,
        heads: 2,
    };
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let layer = RaatLayer::new(&mut store, "l", dims, 4, &mut rng).map_err(err)?;
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            for v in store.value_mut(id).data_mut() {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
        for c in 0..layer.channels() {
            *store.value_mut(layer.channel_m[c]) = Tensor::zeros(&[8, 8]);
            *store.value_mut(layer.channel_bias[c]) = Tensor::zeros(&[1, 1]);
        }
        let nodes = document_nodes(&[mention(0, 0), mention(0, 1), mention(1, 1)], 2);
        let triple = RelationTriple {
            head: 0,
            tail: 1,
            relation: 0,
        };
        let mut t = build_dependency_tensor(&nodes, &[triple], &one_cluster_schema(), 2, false)
            .map_err(err)?;
        for c in CO_RELATION..t.channels() {
            t.zero_channel(c);
        }
        let x = Tensor::matrix(5, 8, (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let mut g = Graph::new(&store);
        let xv = g.input(x).map_err(err)?;
        let raat = layer
            .forward(&mut g, xv, Some(&t), None, &mut None)
            .map_err(err)?;
        let vanilla = layer
            .forward(&mut g, xv, None, None, &mut None)
            .map_err(err)?;
        worst = worst.max(g.value(raat).max_abs_diff(g.value(vanilla)));
    }
    ensure(
        worst <= REDUCTION_TOL,
        format!("max abs diff {worst:.2e} > {REDUCTION_TOL:.0e}"),
    )?;
    Ok(format!("10 seeds, max abs diff {worst:.2e}"))
}

fn chfinann_train_path() -> Option<PathBuf> {
    if let Some(p) = std::env::var_os("REDEE_CHFINANN_TRAIN") {
        return Some(PathBuf::from(p));
    }
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    ["data/ChFinAnn/train.json", "data/chfinann/train.json"]
        .iter()
        .map(|p| root.join(p))
        .find(|p| p.is_file())
}

fn criterion_4() -> Outcome {
    let roles: Vec<String> = (0..MAX_ROLES).map(|r| format!("R{r}")).collect();
    let ontology = EventOntology {
        schema_version: ONTOLOGY_SCHEMA_VERSION,
        event_types: vec![EventTypeDef {
            name: "Wide".into(),
            roles,
            role_entity_types: Default::default(),
        }],
        entity_types: vec!["ANY".into()],
    };
    let schema = derive_relation_schema(&ontology);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in 0..=MAX_ROLES {
        for _ in 0..20 {
            let mut filled: Vec<usize> = (0..MAX_ROLES).collect();
            for i in (1..filled.len()).rev() {
                filled.swap(i, rng.gen_range(0..=i));
            }
            filled.truncate(n);
            let mut args = vec![None; MAX_ROLES];
            for (k, &r) in filled.iter().enumerate() {
                args[r] = Some(k);
            }
            let record = EventRecord {
                event_type: 0,
                args,
            };
            let got = derive_gold_relations(std::slice::from_ref(&record), &schema);
            let mut brute = BTreeSet::new();
            for i in 0..MAX_ROLES {
                for j in i + 1..MAX_ROLES {
                    if let (Some(h), Some(t)) = (record.args[i], record.args[j]) {
                        let relation = schema.find(0, i, j).ok_or("missing schema entry")?;
                        brute.insert(RelationTriple {
                            head: h,
                            tail: t,
                            relation,
                        });
                    }
                }
            }
            ensure(
                got == brute && got.len() == n * n.saturating_sub(1) / 2,
                format!(
                    "n = {n}: {} triples, brute force {}",
                    got.len(),
                    brute.len()
                ),
            )?;
        }
    }
    let mut detail = format!("C(n,2) matches brute force for n in 0..={MAX_ROLES}");
    match chfinann_train_path() {
        Some(path) => {
            let o = chfinann_ontology();
            let limits = Limits {
                max_sentences: usize::MAX,
                max_sentence_len: usize::MAX,
            };
            let ds = ingest_chfinann(&path, &o, limits).map_err(err)?;
            let stats = relation_statistics(&[&ds], &derive_relation_schema(&o));
            let count = stats.count("Pledger2PledgedShares", 0).unwrap_or(0);
            ensure(
                count == CHFINANN_PLEDGER_SHARES,
                format!("{detail}; ChFinAnn Pledger2PledgedShares = {count}, expected {CHFINANN_PLEDGER_SHARES}"),
            )?;
            detail.push_str(&format!("; ChFinAnn Pledger2PledgedShares = {count}"));
        }
        None => detail.push_str(
            "; ChFinAnn count SKIPPED (no train.json under data/ChFinAnn and REDEE_CHFINANN_TRAIN unset)",
        ),
    }
    Ok(detail)
}

fn criterion_5() -> Outcome {
    let ontology = EventOntology::equity_default();
    let cfg = SynthConfig {
        num_docs: ORACLE_DOCS,
        seed: 5,
        ..SynthConfig::default()
    };
    let ds = generate_synthetic_corpus(&cfg, &ontology).map_err(err)?;
    let mut exact = 0usize;
    let mut branching = 0usize;
    for doc in &ds.docs {
        let trees = derive_edag_paths(&doc.records, &ontology);
        branching += usize::from(trees.iter().any(|t| t.leaf_count() > 1));
        let options = |_: usize| {
            (0..doc.entities.len())
                .map(Some)
                .chain([None])
                .collect::<Vec<_>>()
        };
        let mut ok = true;
        for (et, def) in ontology.event_types.iter().enumerate() {
            let mut oracle = OracleScorer { trees: &trees };
            let got: BTreeSet<EventRecord> = decode_event_type(
                &mut oracle,
                et,
                def.roles.len(),
                &options,
                DEFAULT_BRANCH_CAP,
            )
            .map_err(err)?
            .into_iter()
            .collect();
            let gold: BTreeSet<EventRecord> = doc
                .records
                .iter()
                .filter(|r| r.event_type == et)
                .cloned()
                .collect();
            ok &= got == gold;
        }
        exact += usize::from(ok);
    }
    ensure(
        exact == ds.len(),
        format!("oracle decoding exact on {exact}/{} documents", ds.len()),
    )?;
    ensure(branching > 0, "no branching documents in the corpus")?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..300 {
        let len = rng.gen_range(1..=3);
        let k = rng.gen_range(1..=4);
        let e = Tensor::matrix(
            len,
            k,
            (0..len * k).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        );
        let t = Tensor::matrix(
            k + 2,
            k + 2,
            (0..(k + 2) * (k + 2))
                .map(|_| rng.gen_range(-3.0..3.0))
                .collect(),
        );
        let mut scores = Vec::new();
        for code in 0..k.pow(len as u32) {
            let tags: Vec<usize> = (0..len).map(|i| code / k.pow(i as u32) % k).collect();
            scores.push(path_score(&e, &t, &tags));
        }
        let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let brute = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
        worst = worst.max((log_partition(&e, &t).map_err(err)? - brute).abs());
    }
    ensure(
        worst <= CRF_TOL,
        format!("CRF partition differs from enumeration by {worst:.2e}"),
    )?;
    Ok(format!(
        "oracle decoding exact on {exact}/{} documents ({branching} with branching); CRF partition max diff {worst:.1e}",
        ds.len()
    ))
}

fn random_surface(rng: &mut ChaCha8Rng) -> SurfaceRecord {
    SurfaceRecord {
        event_type: 0,
        args: (0..3)
            .map(|_| {
                rng.gen_bool(0.7)
                    .then(|| format!("e{}", rng.gen_range(0..3)))
            })
            .collect(),
    }
}

fn brute_force_tp(
    pred: &[SurfaceRecord],
    gold: &[SurfaceRecord],
    i: usize,
    used: &mut [bool],
) -> usize {
    if i == pred.len() {
        return 0;
    }
    let mut best = brute_force_tp(pred, gold, i + 1, used);
    for g in 0..gold.len() {
        if !used[g] {
            used[g] = true;
            best =
                best.max(shared_args(&pred[i], &gold[g]) + brute_force_tp(pred, gold, i + 1, used));
            used[g] = false;
        }
    }
    best
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..MATCH_CASES {
        let pred: Vec<SurfaceRecord> = (0..rng.gen_range(0..=3))
            .map(|_| random_surface(&mut rng))
            .collect();
        let gold: Vec<SurfaceRecord> = (0..rng.gen_range(0..=3))
            .map(|_| random_surface(&mut rng))
            .collect();
        let tp = brute_force_tp(&pred, &gold, 0, &mut vec![false; gold.len()]);
        let pred_total: usize = pred.iter().map(SurfaceRecord::num_filled).sum();
        let gold_total: usize = gold.iter().map(SurfaceRecord::num_filled).sum();
        let want = Counts {
            tp,
            fp: pred_total - tp,
            fn_: gold_total - tp,
        };
        let got = match_records(&pred, &gold).counts;
        ensure(
            got == want,
            format!("case {case}: {got:?} vs exhaustive {want:?}"),
        )?;
    }
    // One predicted record with three correct arguments against a four-argument gold record.
    let s = |v: &[Option<&str>]| SurfaceRecord {
        event_type: 0,
        args: v.iter().map(|a| a.map(String::from)).collect(),
    };
    let pred = [s(&[Some("A"), Some("B"), Some("C"), None])];
    let gold = [s(&[Some("A"), Some("B"), Some("C"), Some("D")])];
    let report = micro_prf(&[score_document(&pred, &gold, 1)], &["T".to_string()]);
    let want = Prf {
        precision: 1.0,
        recall: 0.75,
        f1: 2.0 * 0.75 / 1.75,
    };
    ensure(
        (report.micro.precision - want.precision).abs() < 1e-12
            && (report.micro.recall - want.recall).abs() < 1e-12
            && (report.micro.f1 - want.f1).abs() < 1e-12,
        format!("fixture gave {:?}", report.micro),
    )?;
    Ok(format!(
        "{MATCH_CASES} random instances match exhaustive assignment; fixture P=1.0 R=0.75"
    ))
}

fn criterion_7() -> Outcome {
    let ontology = EventOntology::equity_default();
    let start = Instant::now();
    let overfit_model = ModelConfig {
        hidden: 32,
        ffn: 64,
        heads: 2,
        eer_layers: 1,
        dre_layers: 1,
        raat1_layers: 2,
        raat2_layers: 2,
        tokenization: Tokenization::Whitespace,
        ..ModelConfig::default()
    };
    let overfit_training = TrainingConfig {
        lr: 1e-3,
        epochs: OVERFIT_EPOCHS,
        eval_every: 10,
        seed: 7,
        ..TrainingConfig::default()
    };
    let small = generate_synthetic_corpus(
        &SynthConfig {
            num_docs: OVERFIT_DOCS,
            seed: 7,
            ..SynthConfig::default()
        },
        &ontology,
    )
    .map_err(err)?;
    let out = train(
        &small,
        Some(&small),
        &overfit_model,
        &overfit_training,
        &ontology,
    )
    .map_err(err)?;
    let reached = out
        .log
        .iter()
        .find(|l| l.dev.is_some_and(|p| p.f1 >= OVERFIT_F1))
        .map(|l| l.epoch);
    let train_f1 = evaluate(&out.model, &small).map_err(err)?.report.micro.f1;
    let overfit_secs = start.elapsed().as_secs_f64();
    let first = match reached {
        Some(epoch) => {
            format!("train F1 >= {OVERFIT_F1} first at epoch {epoch}, kept {train_f1:.3}")
        }
        None => format!(
            "train F1 never reached {OVERFIT_F1} in {OVERFIT_EPOCHS} epochs (kept {train_f1:.3})"
        ),
    };

    let start = Instant::now();
    let [tr, dev, _] = generate_splits(
        &SynthConfig {
            seed: 11,
            ..SynthConfig::default()
        },
        &ontology,
        [500, 100, 0],
    )
    .map_err(err)?;
    let model = ModelConfig {
        hidden: 32,
        ffn: 64,
        heads: 2,
        eer_layers: 2,
        dre_layers: 2,
        raat1_layers: 2,
        raat2_layers: 3,
        tokenization: Tokenization::Whitespace,
        ..ModelConfig::default()
    };
    let training = TrainingConfig {
        lr: 1e-3,
        epochs: 18,
        eval_every: 3,
        seed: 3,
        teacher_forcing: false,
        ..TrainingConfig::default()
    };
    let out = train(&tr, Some(&dev), &model, &training, &ontology).map_err(err)?;
    let dev_f1 = out.best_dev.as_ref().map_or(0.0, |r| r.micro.f1);
    let detail = format!(
        "20-doc overfit: {first} ({overfit_secs:.0}s); 500/100 dev F1 {dev_f1:.3} at epoch {} ({:.0}s)",
        out.best_epoch,
        start.elapsed().as_secs_f64()
    );
    ensure(reached.is_some() && dev_f1 >= DEV_F1, detail.clone())?;
    Ok(detail)
}

fn criterion_8() -> Outcome {
    let ontology = EventOntology::equity_default();
    let [tr, _, te] = generate_splits(
        &SynthConfig {
            seed: 8,
            ..SynthConfig::default()
        },
        &ontology,
        [24, 0, 12],
    )
    .map_err(err)?;
    let model = ModelConfig {
        hidden: 16,
        ffn: 32,
        heads: 2,
        eer_layers: 1,
        dre_layers: 1,
        raat1_layers: 1,
        raat2_layers: 1,
        tokenization: Tokenization::Whitespace,
        ..ModelConfig::default()
    };
    let training = TrainingConfig {
        lr: 1e-3,
        epochs: 3,
        seed: 8,
        ..TrainingConfig::default()
    };
    let a = ablation_compare(&tr, None, &te, &model, &training, &ontology).map_err(err)?;
    let b = ablation_compare(&tr, None, &te, &model, &training, &ontology).map_err(err)?;
    let table = ablation_tsv(&a.rows);
    ensure(a.rows.len() == 4, format!("{} rows", a.rows.len()))?;
    ensure(
        a.rows == b.rows && table == ablation_tsv(&b.rows),
        "ablation table differs between identical runs",
    )?;
    let full_row = table.lines().nth(1).unwrap_or_default();
    ensure(
        full_row.ends_with("+0.00\t+0.00\t+0.00"),
        format!("full-model deltas not zero: {full_row}"),
    )?;

    let builds = |m: &ModelConfig| -> Result<usize, String> {
        let out = train(
            &tr,
            None,
            m,
            &TrainingConfig {
                epochs: 1,
                ..training.clone()
            },
            &ontology,
        )
        .map_err(err)?;
        evaluate(&out.model, &te).map_err(err)?;
        Ok(out.model.tensor_builds())
    };
    let none = builds(&ModelConfig {
        disable_raat1: true,
        disable_raat2: true,
        ..model.clone()
    })?;
    let full = builds(&model)?;
    ensure(
        none == 0,
        format!("{none} tensor builds with both RAAT blocks disabled"),
    )?;
    ensure(full > 0, "full model never built a dependency tensor")?;
    Ok(format!(
        "4-row table identical across runs; tensor builds: -RAAT-1&2 {none}, full {full}"
    ))
}

fn criterion_9() -> Outcome {
    let lambdas = TrainingConfig::default().lambdas;
    ensure(
        lambdas == [0.05, 1.0, 0.05, 0.95],
        format!("default weights {lambdas:?}"),
    )?;
    let ones = StageLosses {
        ne: 1.0,
        dre: 1.0,
        pred: 1.0,
        a: 1.0,
    };
    let unit = combined_loss(&ones, &lambdas).map_err(err)?;
    ensure(
        (unit - UNIT_LOSS_TOTAL).abs() <= LINEARITY_TOL,
        format!("unit losses give {unit}"),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let l = StageLosses {
            ne: rng.gen_range(0.0..10.0),
            dre: rng.gen_range(0.0..10.0),
            pred: rng.gen_range(0.0..10.0),
            a: rng.gen_range(0.0..10.0),
        };
        let base: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.0..2.0));
        for i in 0..4 {
            let delta = rng.gen_range(-1.0..1.0);
            let mut w = base;
            w[i] += delta;
            let lhs =
                combined_loss(&l, &w).map_err(err)? - combined_loss(&l, &base).map_err(err)?;
            let rhs = delta * l.as_array()[i];
            worst = worst.max((lhs - rhs).abs() / (1.0 + rhs.abs()));
        }
    }
    ensure(
        worst <= LINEARITY_TOL,
        format!("linearity error {worst:.2e}"),
    )?;
    Ok(format!(
        "unit losses -> {unit}; linear in each weight within {worst:.1e}"
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient suite", criterion_1),
        ("dependency-tensor suite", criterion_2),
        ("reduction to vanilla attention", criterion_3),
        ("relation combinatorics", criterion_4),
        ("decoding round trip", criterion_5),
        ("metric oracle", criterion_6),
        ("end-to-end training", criterion_7),
        ("ablation harness", criterion_8),
        ("loss linearity", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (tag, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "{tag} criterion {}: {name}: {detail} [{:.1}s]",
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
