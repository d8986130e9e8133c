//! Micro P/R/F1 reports, the analysis splits and their TSV layouts.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::Counts;
use crate::corpus::document_scatter;
use crate::ontology::AnnotatedDocument;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// A zero denominator yields 0 for that ratio; F1 is 0 when P and R are both 0.
    pub fn from_counts(c: Counts) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeScore {
    pub event_type: String,
    pub counts: Counts,
    pub prf: Prf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub docs: usize,
    pub per_type: Vec<TypeScore>,
    pub micro_counts: Counts,
    pub micro: Prf,
}

/// Pools per-document, per-type counts. The micro average pools every type's counts.
pub fn micro_prf(doc_counts: &[Vec<Counts>], type_names: &[String]) -> EvalReport {
    let mut per = vec![Counts::default(); type_names.len()];
    for d in doc_counts {
        for (acc, c) in per.iter_mut().zip(d) {
            acc.add(*c);
        }
    }
    let micro_counts = per.iter().fold(Counts::default(), |a, &c| a + c);
    EvalReport {
        docs: doc_counts.len(),
        per_type: type_names
            .iter()
            .zip(&per)
            .map(|(n, &c)| TypeScore {
                event_type: n.clone(),
                counts: c,
                prf: Prf::from_counts(c),
            })
            .collect(),
        micro_counts,
        micro: Prf::from_counts(micro_counts),
    }
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

/// Column layout: `model`, then `P R F1` per event type, then `Avg` `P R F1`.
pub fn overall_tsv(rows: &[(&str, &EvalReport)]) -> String {
    let mut out = String::from("model");
    if let Some((_, r)) = rows.first() {
        for t in &r.per_type {
            let _ = write!(out, "\t{0}.P\t{0}.R\t{0}.F1", t.event_type);
        }
    }
    out.push_str("\tAvg.P\tAvg.R\tAvg.F1\n");
    for (name, r) in rows {
        out.push_str(name);
        for t in &r.per_type {
            let _ = write!(
                out,
                "\t{}\t{}\t{}",
                pct(t.prf.precision),
                pct(t.prf.recall),
                pct(t.prf.f1)
            );
        }
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}",
            pct(r.micro.precision),
            pct(r.micro.recall),
            pct(r.micro.f1)
        );
    }
    out
}

/// Document indices of the four scatter sets, from least to most scattered.
///
/// Documents are sorted by mean record scatter (stable on ties) and cut into four sets whose
/// sizes differ by at most one, earlier sets taking the remainder.
pub fn scatter_sets(docs: &[AnnotatedDocument]) -> [Vec<usize>; 4] {
    let scatter: Vec<f64> = docs.iter().map(document_scatter).collect();
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.sort_by(|&a, &b| scatter[a].total_cmp(&scatter[b]));
    let base = docs.len() / 4;
    let extra = docs.len() % 4;
    let mut sets: [Vec<usize>; 4] = Default::default();
    let mut at = 0;
    for (q, set) in sets.iter_mut().enumerate() {
        let size = base + usize::from(q < extra);
        *set = order[at..at + size].to_vec();
        at += size;
    }
    sets
}

/// Micro reports for the four scatter sets; `None` marks an empty set.
pub fn scatter_quartiles(
    docs: &[AnnotatedDocument],
    doc_counts: &[Vec<Counts>],
    type_names: &[String],
) -> [Option<EvalReport>; 4] {
    scatter_sets(docs).map(|set| subset_report(&set, doc_counts, type_names))
}

fn subset_report(
    idx: &[usize],
    doc_counts: &[Vec<Counts>],
    type_names: &[String],
) -> Option<EvalReport> {
    if idx.is_empty() {
        return None;
    }
    let sub: Vec<Vec<Counts>> = idx.iter().map(|&i| doc_counts[i].clone()).collect();
    Some(micro_prf(&sub, type_names))
}

/// Reports over single-record (S.) and multi-record (M.) documents; `None` marks an empty group.
pub fn single_multi_split(
    docs: &[AnnotatedDocument],
    doc_counts: &[Vec<Counts>],
    type_names: &[String],
) -> (Option<EvalReport>, Option<EvalReport>) {
    let single: Vec<usize> = (0..docs.len())
        .filter(|&i| docs[i].records.len() == 1)
        .collect();
    let multi: Vec<usize> = (0..docs.len())
        .filter(|&i| docs[i].records.len() >= 2)
        .collect();
    (
        subset_report(&single, doc_counts, type_names),
        subset_report(&multi, doc_counts, type_names),
    )
}

fn f1_cell(r: &Option<EvalReport>, f: impl Fn(&EvalReport) -> f64) -> String {
    r.as_ref().map_or_else(|| "-".to_string(), |r| pct(f(r)))
}

/// One row per quartile: `set docs P R F1`.
pub fn quartile_tsv(q: &[Option<EvalReport>; 4]) -> String {
    let mut out = String::from("set\tdocs\tP\tR\tF1\n");
    for (name, r) in ["I", "II", "III", "IV"].iter().zip(q) {
        let _ = writeln!(
            out,
            "{name}\t{}\t{}\t{}\t{}",
            r.as_ref().map_or(0, |r| r.docs),
            f1_cell(r, |r| r.micro.precision),
            f1_cell(r, |r| r.micro.recall),
            f1_cell(r, |r| r.micro.f1)
        );
    }
    out
}

/// F1 per event type for S. and M., then `Avg` S., M. and S.&M.
pub fn single_multi_tsv(
    single: &Option<EvalReport>,
    multi: &Option<EvalReport>,
    overall: &EvalReport,
) -> String {
    let mut out = String::from("model");
    for t in &overall.per_type {
        let _ = write!(out, "\t{0}.S\t{0}.M", t.event_type);
    }
    out.push_str("\tAvg.S\tAvg.M\tAvg.S&M\nReDEE");
    for k in 0..overall.per_type.len() {
        let _ = write!(
            out,
            "\t{}\t{}",
            f1_cell(single, |r| r.per_type[k].prf.f1),
            f1_cell(multi, |r| r.per_type[k].prf.f1)
        );
    }
    let _ = writeln!(
        out,
        "\t{}\t{}\t{}",
        f1_cell(single, |r| r.micro.f1),
        f1_cell(multi, |r| r.micro.f1),
        pct(overall.micro.f1)
    );
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub micro: Prf,
}

/// First row absolute P/R/F1 of the full model; every row also lists signed deltas against it.
pub fn ablation_tsv(rows: &[AblationRow]) -> String {
    let mut out = String::from("model\tP\tR\tF1\tdP\tdR\tdF1\n");
    let Some(base) = rows.first() else {
        return out;
    };
    for r in rows {
        let d = |a: f64, b: f64| format!("{:+.2}", 100.0 * (a - b));
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.variant,
            pct(r.micro.precision),
            pct(r.micro.recall),
            pct(r.micro.f1),
            d(r.micro.precision, base.micro.precision),
            d(r.micro.recall, base.micro.recall),
            d(r.micro.f1, base.micro.f1)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::{Document, EventRecord};

    fn names() -> Vec<String> {
        vec!["A".into(), "B".into()]
    }

    #[test]
    fn perfect_counts_give_unit_scores() {
        let r = micro_prf(
            &[vec![
                Counts {
                    tp: 5,
                    fp: 0,
                    fn_: 0,
                },
                Counts::default(),
            ]],
            &names(),
        );
        assert_eq!(
            r.micro,
            Prf {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0
            }
        );
    }

    #[test]
    fn empty_predictions_score_zero() {
        let r = micro_prf(
            &[vec![
                Counts {
                    tp: 0,
                    fp: 0,
                    fn_: 3,
                },
                Counts::default(),
            ]],
            &names(),
        );
        assert_eq!(r.micro, Prf::default());
        assert_eq!(r.per_type[1].prf, Prf::default());
    }

    #[test]
    fn two_document_fixture_by_hand() {
        // Doc 1: A tp 3 fp 1 fn 0; B tp 0 fp 0 fn 2. Doc 2: A tp 1 fp 0 fn 1.
        // A: P = 4/5, R = 4/5. Micro: tp 4, fp 1, fn 3 → P = 0.8, R = 4/7, F1 = 2/3.
        let d1 = vec![
            Counts {
                tp: 3,
                fp: 1,
                fn_: 0,
            },
            Counts {
                tp: 0,
                fp: 0,
                fn_: 2,
            },
        ];
        let d2 = vec![
            Counts {
                tp: 1,
                fp: 0,
                fn_: 1,
            },
            Counts::default(),
        ];
        let r = micro_prf(&[d1.clone(), d2.clone()], &names());
        assert!((r.per_type[0].prf.precision - 0.8).abs() < 1e-12);
        assert!((r.per_type[0].prf.recall - 0.8).abs() < 1e-12);
        assert!((r.micro.precision - 0.8).abs() < 1e-12);
        assert!((r.micro.recall - 4.0 / 7.0).abs() < 1e-12);
        assert!((r.micro.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(micro_prf(&[d2, d1], &names()).micro, r.micro);
    }

    fn doc_with_scatter(k: usize) -> AnnotatedDocument {
        use crate::ontology::{Entity, EntityMention};
        let sentences = vec![vec!["x".to_string()]; k];
        let entities = (0..k)
            .map(|s| Entity {
                key: format!("e{s}"),
                entity_type: "ORG".into(),
                mentions: vec![EntityMention {
                    sentence: s,
                    start: 0,
                    end: 1,
                    entity: s,
                }],
            })
            .collect();
        AnnotatedDocument {
            document: Document::new(format!("d{k}"), sentences, 128, 64),
            entities,
            records: vec![EventRecord {
                event_type: 0,
                args: (0..k).map(Some).collect(),
            }],
        }
    }

    #[test]
    fn scatter_sets_sort_and_split() {
        let docs: Vec<AnnotatedDocument> = [5, 1, 8, 3, 2, 7, 4, 6]
            .iter()
            .map(|&k| doc_with_scatter(k))
            .collect();
        let sets = scatter_sets(&docs);
        let scat = |i: usize| docs[i].records[0].args.len();
        let s: Vec<Vec<usize>> = sets
            .iter()
            .map(|s| s.iter().map(|&i| scat(i)).collect())
            .collect();
        assert_eq!(s, vec![vec![1, 2], vec![3, 4], vec![5, 6], vec![7, 8]]);
        let sizes: Vec<usize> = scatter_sets(&docs[..7]).iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![2, 2, 2, 1]);
    }

    #[test]
    fn single_only_corpus_has_no_multi_report() {
        let docs = vec![doc_with_scatter(2), doc_with_scatter(3)];
        let counts = vec![vec![Counts::default(); 2]; 2];
        let (s, m) = single_multi_split(&docs, &counts, &names());
        assert!(s.is_some() && m.is_none());
        let overall = micro_prf(&counts, &names());
        assert!(single_multi_tsv(&s, &m, &overall).contains("\t-\t"));
    }

    #[test]
    fn ablation_table_has_zero_full_deltas() {
        let rows = vec![
            AblationRow {
                variant: "ReDEE".into(),
                micro: Prf {
                    precision: 0.8,
                    recall: 0.7,
                    f1: 0.75,
                },
            },
            AblationRow {
                variant: "-RAAT-1".into(),
                micro: Prf {
                    precision: 0.81,
                    recall: 0.6,
                    f1: 0.7,
                },
            },
        ];
        let t = ablation_tsv(&rows);
        let full = t.lines().nth(1).unwrap();
        assert!(full.ends_with("+0.00\t+0.00\t+0.00"), "{full}");
        assert!(t.lines().nth(2).unwrap().contains("-10.00"));
    }
}
