//! Seeded synthetic corpus generator.
//!
//! Each record is realised as a block of consecutive sentences. A trigger token opens the
//! block, every argument is preceded by a role cue token, and from the second sentence on the
//! block re-mentions the previous sentence's last argument so the sentences stay linked.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::stats::record_scatter;
use super::Dataset;
use crate::ontology::{
    AnnotatedDocument, Document, Entity, EntityMention, EventOntology, EventRecord,
    DEFAULT_MAX_SENTENCES, DEFAULT_MAX_SENTENCE_LEN,
};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_docs: usize,
    /// Filler word vocabulary size.
    pub vocab_size: usize,
    /// `events_per_doc[k]` is the probability of a document holding `k + 1` records.
    pub events_per_doc: Vec<f64>,
    /// Target mean number of distinct sentences touched by a record's arguments.
    pub scatter_level: f64,
    /// Probability that a multi-record document reuses an argument entity across records.
    pub shared_argument_prob: f64,
    pub seed: u64,
    /// Probability that a role beyond the first two is left empty.
    pub missing_role_prob: f64,
    /// Probability that an `EndDate` role reuses the record's `StartDate` entity.
    pub shared_date_prob: f64,
    /// Probability that a later record repeats the previous record's event type.
    pub same_type_prob: f64,
    /// Probability of a filler-only sentence before each record block.
    pub noise_sentence_prob: f64,
    /// Probability of a distractor entity mention (not an argument) in a noise sentence.
    pub distractor_prob: f64,
    /// Distinct surfaces available per entity type.
    pub entity_pool_size: usize,
    pub max_sentences: usize,
    pub max_sentence_len: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_docs: 500,
            vocab_size: 200,
            events_per_doc: vec![0.7, 0.2, 0.1],
            scatter_level: 2.5,
            shared_argument_prob: 0.3,
            seed: 7,
            missing_role_prob: 0.1,
            shared_date_prob: 0.1,
            same_type_prob: 0.5,
            noise_sentence_prob: 0.3,
            distractor_prob: 0.3,
            entity_pool_size: 400,
            max_sentences: DEFAULT_MAX_SENTENCES,
            max_sentence_len: DEFAULT_MAX_SENTENCE_LEN,
        }
    }
}

const FILLER_PER_ARG: usize = 2;

impl SynthConfig {
    pub fn validate(&self, ontology: &EventOntology) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.events_per_doc.is_empty() {
            return bad("events_per_doc is empty".into());
        }
        if self.events_per_doc.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("events_per_doc probabilities must lie in [0, 1]".into());
        }
        let total: f64 = self.events_per_doc.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("events_per_doc sums to {total}, expected 1"));
        }
        for (name, p) in [
            ("shared_argument_prob", self.shared_argument_prob),
            ("missing_role_prob", self.missing_role_prob),
            ("shared_date_prob", self.shared_date_prob),
            ("same_type_prob", self.same_type_prob),
            ("noise_sentence_prob", self.noise_sentence_prob),
            ("distractor_prob", self.distractor_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if ontology.event_types.is_empty() {
            return bad("ontology has no event types".into());
        }
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive".into());
        }
        let max_roles = ontology
            .event_types
            .iter()
            .map(|e| e.roles.len())
            .min()
            .unwrap_or(0);
        if !(self.scatter_level >= 1.0) || self.scatter_level > self.max_sentences as f64 {
            return bad(format!(
                "scatter_level {} infeasible: must lie in [1, max_sentences = {}]",
                self.scatter_level, self.max_sentences
            ));
        }
        if self.scatter_level > max_roles as f64 {
            return bad(format!(
                "scatter_level {} infeasible: an event type has only {max_roles} roles",
                self.scatter_level
            ));
        }
        let max_events = self.events_per_doc.len();
        let worst_sentences = max_events * (1 + max_roles_any(ontology));
        if worst_sentences > self.max_sentences {
            return bad(format!(
                "{max_events} records per document need up to {worst_sentences} sentences, above max_sentences = {}",
                self.max_sentences
            ));
        }
        let longest = 2 + max_roles_any(ontology) * (FILLER_PER_ARG + 4) + 3;
        if longest > self.max_sentence_len {
            return bad(format!(
                "max_sentence_len {} too small for generated sentences (need {longest})",
                self.max_sentence_len
            ));
        }
        if self.entity_pool_size < max_events * max_roles_any(ontology) + 1 {
            return bad("entity_pool_size too small for unique surfaces".into());
        }
        Ok(())
    }
}

fn max_roles_any(o: &EventOntology) -> usize {
    o.event_types
        .iter()
        .map(|e| e.roles.len())
        .max()
        .unwrap_or(0)
}

/// Largest-remainder allocation of `n` items over `probs`.
pub fn quota_counts(probs: &[f64], n: usize) -> Vec<usize> {
    let raw: Vec<f64> = probs.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if probs[i] > 0.0 {
            counts[i] += 1;
            left -= 1;
        }
    }
    counts
}

pub fn trigger_token(event_type: &str) -> String {
    format!("#{event_type}")
}

pub fn role_cue_token(role: &str) -> String {
    format!("@{role}")
}

/// Surface tokens of the `i`-th pooled entity of a type.
pub fn entity_surface_tokens(entity_type: &str, i: usize) -> Vec<String> {
    match entity_type {
        "ORG" => vec![format!("Org{i}"), "Co".into()],
        "PER" => vec![format!("Per{i}")],
        "SHARES" => vec![format!("{}", (i + 1) * 100), "shares".into()],
        "DATE" => vec![format!("Y{}", 2000 + i / 12), format!("M{}", i % 12 + 1)],
        other => vec![format!("{other}{i}")],
    }
}

struct DocBuilder<'a> {
    cfg: &'a SynthConfig,
    ontology: &'a EventOntology,
    sentences: Vec<Vec<String>>,
    entities: Vec<Entity>,
    /// Pool index of each entity's surface.
    pool_index: Vec<usize>,
    used: Vec<Vec<usize>>,
}

impl DocBuilder<'_> {
    fn filler(&self, rng: &mut ChaCha8Rng, out: &mut Vec<String>, max: usize) {
        for _ in 0..rng.gen_range(0..=max) {
            out.push(format!("w{}", rng.gen_range(0..self.cfg.vocab_size)));
        }
    }

    fn new_entity(&mut self, rng: &mut ChaCha8Rng, entity_type: &str) -> usize {
        let ti = self
            .ontology
            .entity_type_index(entity_type)
            .expect("role types come from the ontology");
        let i = loop {
            let i = rng.gen_range(0..self.cfg.entity_pool_size);
            if !self.used[ti].contains(&i) {
                break i;
            }
        };
        self.used[ti].push(i);
        self.pool_index.push(i);
        self.entities.push(Entity {
            key: format!("e{}", self.entities.len()),
            entity_type: entity_type.to_string(),
            mentions: vec![],
        });
        self.entities.len() - 1
    }

    fn mention(&mut self, sentence: &mut Vec<String>, sent_idx: usize, entity: usize) {
        let tokens =
            entity_surface_tokens(&self.entities[entity].entity_type, self.pool_index[entity]);
        let start = sentence.len();
        sentence.extend(tokens);
        self.entities[entity].mentions.push(EntityMention {
            sentence: sent_idx,
            start,
            end: sentence.len(),
            entity,
        });
    }
}

/// Splits `n` items into `s` non-empty contiguous groups at random cut points.
fn split_groups(rng: &mut ChaCha8Rng, n: usize, s: usize) -> Vec<usize> {
    let mut cuts: Vec<usize> = (1..n).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(s - 1).collect();
    cuts.sort_unstable();
    let mut sizes = Vec::with_capacity(s);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(n)) {
        sizes.push(c - prev);
        prev = c;
    }
    sizes
}

/// Produces `config.num_docs` documents; a pure function of `(config, ontology)`.
pub fn generate_synthetic_corpus(
    config: &SynthConfig,
    ontology: &EventOntology,
) -> Result<Dataset> {
    generate_split(config, ontology, "synthetic", config.seed)
}

/// Train/dev/test corpora from one config, each split seeded from `config.seed`.
pub fn generate_splits(
    config: &SynthConfig,
    ontology: &EventOntology,
    sizes: [usize; 3],
) -> Result<[Dataset; 3]> {
    let mk = |name: &str, n: usize, k: u64| {
        let cfg = SynthConfig {
            num_docs: n,
            ..config.clone()
        };
        generate_split(
            &cfg,
            ontology,
            name,
            config.seed.wrapping_mul(1_000_003).wrapping_add(k),
        )
    };
    Ok([
        mk("train", sizes[0], 0)?,
        mk("dev", sizes[1], 1)?,
        mk("test", sizes[2], 2)?,
    ])
}

fn generate_split(
    config: &SynthConfig,
    ontology: &EventOntology,
    split: &str,
    seed: u64,
) -> Result<Dataset> {
    config.validate(ontology)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: Vec<usize> = Vec::with_capacity(config.num_docs);
    for (k, &c) in quota_counts(&config.events_per_doc, config.num_docs)
        .iter()
        .enumerate()
    {
        counts.extend(std::iter::repeat_n(k + 1, c));
    }
    counts.shuffle(&mut rng);

    // Running totals for the scatter controller.
    let mut scatter_sum = 0.0;
    let mut scatter_n = 0usize;
    let mut docs = Vec::with_capacity(config.num_docs);
    for (d, &n_records) in counts.iter().enumerate() {
        let doc = generate_document(
            config,
            ontology,
            &mut rng,
            &format!("{split}-{d:05}"),
            n_records,
            &mut scatter_sum,
            &mut scatter_n,
        );
        docs.push(doc);
    }
    Ok(Dataset::new(split, docs))
}

#[allow(clippy::too_many_arguments)]
fn generate_document(
    cfg: &SynthConfig,
    ontology: &EventOntology,
    rng: &mut ChaCha8Rng,
    doc_id: &str,
    n_records: usize,
    scatter_sum: &mut f64,
    scatter_n: &mut usize,
) -> AnnotatedDocument {
    let mut b = DocBuilder {
        cfg,
        ontology,
        sentences: Vec::new(),
        entities: Vec::new(),
        pool_index: Vec::new(),
        used: vec![Vec::new(); ontology.entity_types.len()],
    };

    // Choose event types and argument entities.
    let mut records: Vec<EventRecord> = Vec::with_capacity(n_records);
    for r in 0..n_records {
        let et = match records.last() {
            Some(prev) if rng.gen_bool(cfg.same_type_prob) => prev.event_type,
            _ => rng.gen_range(0..ontology.event_types.len()),
        };
        let def = &ontology.event_types[et];
        let mut args: Vec<Option<usize>> = vec![None; def.roles.len()];
        for role in 0..def.roles.len() {
            if role >= 2 && rng.gen_bool(cfg.missing_role_prob) {
                continue;
            }
            if def.roles[role] == "EndDate" && rng.gen_bool(cfg.shared_date_prob) {
                if let Some(start) = def.role_index("StartDate").and_then(|s| args[s]) {
                    args[role] = Some(start);
                    continue;
                }
            }
            let allowed = allowed_types(ontology, et, role);
            let ty = allowed[rng.gen_range(0..allowed.len())].clone();
            args[role] = Some(b.new_entity(rng, &ty));
        }
        let mut rec = EventRecord {
            event_type: et,
            args,
        };
        if r > 0 && rng.gen_bool(cfg.shared_argument_prob) {
            share_argument(&b, ontology, rng, &records, &mut rec);
        }
        records.push(rec);
    }
    // Entities orphaned by sharing are dropped below, after realisation.

    // Pick sentence counts per record, tracking the running mean scatter.
    let mut planned: Vec<usize> = Vec::with_capacity(n_records);
    for rec in &records {
        let n = rec.num_filled();
        let desired = cfg.scatter_level * (*scatter_n + planned.len() + 1) as f64
            - *scatter_sum
            - planned.iter().sum::<usize>() as f64;
        let base = desired.floor();
        let frac = desired - base;
        let mut s = base as i64 + i64::from(rng.gen_bool(frac.clamp(0.0, 1.0)));
        s = s.clamp(1, n as i64);
        planned.push(s as usize);
    }

    // Realise sentences.
    let mut realised: Vec<bool> = vec![false; b.entities.len()];
    for (rec, &s) in records.iter().zip(&planned) {
        if rng.gen_bool(cfg.noise_sentence_prob) {
            let idx = b.sentences.len();
            let mut sent = Vec::new();
            b.filler(rng, &mut sent, 4);
            sent.push(format!("w{}", rng.gen_range(0..cfg.vocab_size)));
            if rng.gen_bool(cfg.distractor_prob) {
                let ty =
                    ontology.entity_types[rng.gen_range(0..ontology.entity_types.len())].clone();
                let e = b.new_entity(rng, &ty);
                realised.push(true);
                b.mention(&mut sent, idx, e);
                b.filler(rng, &mut sent, 2);
            }
            b.sentences.push(sent);
        }
        let def = &ontology.event_types[rec.event_type];
        let filled: Vec<(usize, usize)> = rec.filled().collect();
        let groups = split_groups(rng, filled.len(), s);
        let mut cursor = 0;
        let mut prev_last: Option<(usize, usize)> = None;
        for (g, &size) in groups.iter().enumerate() {
            let idx = b.sentences.len();
            let mut sent = Vec::new();
            b.filler(rng, &mut sent, 1);
            if g == 0 {
                sent.push(trigger_token(&def.name));
            }
            if let Some((role, e)) = prev_last {
                sent.push(role_cue_token(&def.roles[role]));
                b.mention(&mut sent, idx, e);
            }
            for &(role, e) in &filled[cursor..cursor + size] {
                b.filler(rng, &mut sent, FILLER_PER_ARG);
                sent.push(role_cue_token(&def.roles[role]));
                b.mention(&mut sent, idx, e);
                realised[e] = true;
            }
            b.filler(rng, &mut sent, 1);
            cursor += size;
            prev_last = filled[cursor - 1..cursor].first().copied();
            b.sentences.push(sent);
        }
    }

    // Drop entities that never received a mention and remap record arguments.
    let mut remap = vec![None; b.entities.len()];
    let mut entities = Vec::new();
    for (k, mut e) in std::mem::take(&mut b.entities).into_iter().enumerate() {
        if !realised[k] || e.mentions.is_empty() {
            continue;
        }
        let new = entities.len();
        for m in &mut e.mentions {
            m.entity = new;
        }
        e.key = format!("e{new}");
        remap[k] = Some(new);
        entities.push(e);
    }
    for r in &mut records {
        for a in &mut r.args {
            *a = a.and_then(|e| remap[e]);
        }
    }
    let doc = AnnotatedDocument {
        document: Document::new(doc_id, b.sentences, cfg.max_sentences, cfg.max_sentence_len),
        entities,
        records,
    };
    for r in &doc.records {
        *scatter_sum += record_scatter(&doc, r) as f64;
        *scatter_n += 1;
    }
    doc
}

fn allowed_types(ontology: &EventOntology, et: usize, role: usize) -> Vec<String> {
    let def = &ontology.event_types[et];
    match def.role_entity_types.get(&def.roles[role]) {
        Some(t) if !t.is_empty() => t.clone(),
        _ => ontology.entity_types.clone(),
    }
}

/// Replaces one argument of `rec` with a type-compatible entity from an earlier record.
fn share_argument(
    b: &DocBuilder<'_>,
    ontology: &EventOntology,
    rng: &mut ChaCha8Rng,
    earlier: &[EventRecord],
    rec: &mut EventRecord,
) {
    let def = &ontology.event_types[rec.event_type];
    let mut options = Vec::new();
    for (role, own) in rec.filled() {
        for prev in earlier {
            for (_, e) in prev.filled() {
                let already = rec.args.contains(&Some(e));
                if !already && e != own && def.role_accepts(role, &b.entities[e].entity_type) {
                    options.push((role, e));
                }
            }
        }
    }
    options.sort_unstable();
    options.dedup();
    if let Some(&(role, e)) = options.choose(rng) {
        let old = rec.args[role];
        for a in &mut rec.args {
            if *a == old {
                *a = Some(e);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::dataset::write_dataset;
    use crate::corpus::stats::corpus_statistics;

    fn ont() -> EventOntology {
        EventOntology::equity_default()
    }

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            num_docs: 40,
            seed,
            ..SynthConfig::default()
        }
    }

    fn bytes(ds: &Dataset) -> Vec<u8> {
        let mut buf = Vec::new();
        write_dataset(&mut buf, ds, &ont()).unwrap();
        buf
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let a = generate_synthetic_corpus(&small(7), &ont()).unwrap();
        let b = generate_synthetic_corpus(&small(7), &ont()).unwrap();
        assert_eq!(bytes(&a), bytes(&b));
        let c = generate_synthetic_corpus(&small(8), &ont()).unwrap();
        assert_ne!(bytes(&a), bytes(&c));
    }

    #[test]
    fn degenerate_single_event_distribution() {
        let cfg = SynthConfig {
            events_per_doc: vec![1.0],
            ..small(3)
        };
        let ds = generate_synthetic_corpus(&cfg, &ont()).unwrap();
        assert!(ds.docs.iter().all(|d| d.records.len() == 1));
    }

    #[test]
    fn always_shared_argument() {
        let cfg = SynthConfig {
            events_per_doc: vec![0.0, 1.0],
            shared_argument_prob: 1.0,
            ..small(5)
        };
        let ds = generate_synthetic_corpus(&cfg, &ont()).unwrap();
        for d in &ds.docs {
            assert_eq!(d.records.len(), 2);
            let a: Vec<usize> = d.records[0].filled().map(|(_, e)| e).collect();
            assert!(
                d.records[1].filled().any(|(_, e)| a.contains(&e)),
                "{}",
                d.document.doc_id
            );
        }
    }

    #[test]
    fn infeasible_scatter_is_a_config_error() {
        let cfg = SynthConfig {
            scatter_level: 200.0,
            ..small(1)
        };
        assert!(matches!(
            generate_synthetic_corpus(&cfg, &ont()),
            Err(Error::Config(_))
        ));
        let cfg = SynthConfig {
            events_per_doc: vec![0.5, 0.6],
            ..small(1)
        };
        assert!(generate_synthetic_corpus(&cfg, &ont()).is_err());
    }

    #[test]
    fn statistics_track_targets_over_500_docs() {
        let cfg = SynthConfig {
            num_docs: 500,
            ..SynthConfig::default()
        };
        let ds = generate_synthetic_corpus(&cfg, &ont()).unwrap();
        let st = corpus_statistics(&ds);
        let target_events: f64 = cfg
            .events_per_doc
            .iter()
            .enumerate()
            .map(|(k, p)| (k + 1) as f64 * p)
            .sum();
        assert!(
            (st.mean_records_per_doc / target_events - 1.0).abs() <= 0.1,
            "{st:?}"
        );
        assert!(
            (st.mean_scatter / cfg.scatter_level - 1.0).abs() <= 0.1,
            "{st:?}"
        );
    }

    #[test]
    fn quota_counts_sum_and_round() {
        assert_eq!(quota_counts(&[0.7, 0.2, 0.1], 10), vec![7, 2, 1]);
        assert_eq!(quota_counts(&[0.5, 0.5], 3).iter().sum::<usize>(), 3);
        assert_eq!(quota_counts(&[0.0, 1.0], 4), vec![0, 4]);
    }

    #[test]
    fn every_argument_has_a_mention() {
        let ds = generate_synthetic_corpus(&small(11), &ont()).unwrap();
        for d in &ds.docs {
            for r in &d.records {
                for (_, e) in r.filled() {
                    assert!(!d.entities[e].mentions.is_empty());
                }
            }
        }
    }
}
