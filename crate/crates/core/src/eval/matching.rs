//! Record alignment and argument-level counting.

use serde::{Deserialize, Serialize};

use crate::ontology::{AnnotatedDocument, EventRecord, Tokenization};

/// A record whose arguments are normalized surface strings.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SurfaceRecord {
    pub event_type: usize,
    pub args: Vec<Option<String>>,
}

impl SurfaceRecord {
    pub fn from_record(doc: &AnnotatedDocument, r: &EventRecord, tok: Tokenization) -> Self {
        SurfaceRecord {
            event_type: r.event_type,
            args: r
                .args
                .iter()
                .map(|a| a.map(|e| doc.entity_surface(e, tok)))
                .collect(),
        }
    }

    pub fn num_filled(&self) -> usize {
        self.args.iter().filter(|a| a.is_some()).count()
    }
}

pub fn gold_surface_records(doc: &AnnotatedDocument, tok: Tokenization) -> Vec<SurfaceRecord> {
    doc.records
        .iter()
        .map(|r| SurfaceRecord::from_record(doc, r, tok))
        .collect()
}

/// Number of roles where both records hold the same argument.
pub fn shared_args(a: &SurfaceRecord, b: &SurfaceRecord) -> usize {
    a.args
        .iter()
        .zip(&b.args)
        .filter(|(x, y)| x.is_some() && x == y)
        .count()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn add(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

impl std::ops::Add for Counts {
    type Output = Counts;
    fn add(mut self, o: Counts) -> Counts {
        Counts::add(&mut self, o);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecordMatch {
    /// Matched `(pred, gold)` index pairs.
    pub pairs: Vec<(usize, usize)>,
    pub counts: Counts,
}

fn counts_for(pred: &[SurfaceRecord], gold: &[SurfaceRecord], pairs: &[(usize, usize)]) -> Counts {
    let tp: usize = pairs
        .iter()
        .map(|&(p, g)| shared_args(&pred[p], &gold[g]))
        .sum();
    let pred_total: usize = pred.iter().map(SurfaceRecord::num_filled).sum();
    let gold_total: usize = gold.iter().map(SurfaceRecord::num_filled).sum();
    Counts {
        tp,
        fp: pred_total - tp,
        fn_: gold_total - tp,
    }
}

/// Greedy one-to-one matching: repeatedly takes the pair with the most shared arguments,
/// ties to the lower predicted index, then the lower gold index.
pub fn greedy_match(pred: &[SurfaceRecord], gold: &[SurfaceRecord]) -> RecordMatch {
    let mut cand: Vec<(usize, usize, usize)> = Vec::with_capacity(pred.len() * gold.len());
    for (p, pr) in pred.iter().enumerate() {
        for (g, gr) in gold.iter().enumerate() {
            cand.push((shared_args(pr, gr), p, g));
        }
    }
    cand.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_p = vec![false; pred.len()];
    let mut used_g = vec![false; gold.len()];
    let mut pairs = Vec::new();
    for (_, p, g) in cand {
        if !used_p[p] && !used_g[g] {
            used_p[p] = true;
            used_g[g] = true;
            pairs.push((p, g));
        }
    }
    pairs.sort_unstable();
    let counts = counts_for(pred, gold, &pairs);
    RecordMatch { pairs, counts }
}

/// Largest gold-record count solved exactly; larger instances fall back to [`greedy_match`].
pub const EXACT_MATCH_LIMIT: usize = 12;

/// Maximum-shared-argument one-to-one assignment by dynamic programming over gold subsets.
pub fn optimal_match(pred: &[SurfaceRecord], gold: &[SurfaceRecord]) -> RecordMatch {
    let ng = gold.len();
    let full = 1usize << ng;
    let w: Vec<Vec<usize>> = pred
        .iter()
        .map(|p| gold.iter().map(|g| shared_args(p, g)).collect())
        .collect();
    // best[i][mask]: max score using preds i.. with gold set `mask` already taken.
    let mut best = vec![vec![0usize; full]; pred.len() + 1];
    for i in (0..pred.len()).rev() {
        for mask in 0..full {
            let mut b = best[i + 1][mask];
            for (g, &wg) in w[i].iter().enumerate() {
                if mask & (1 << g) == 0 && wg > 0 {
                    b = b.max(wg + best[i + 1][mask | (1 << g)]);
                }
            }
            best[i][mask] = b;
        }
    }
    let mut pairs = Vec::new();
    let mut mask = 0usize;
    for i in 0..pred.len() {
        let target = best[i][mask];
        if best[i + 1][mask] == target {
            continue;
        }
        let g = (0..ng)
            .find(|&g| {
                mask & (1 << g) == 0
                    && w[i][g] > 0
                    && w[i][g] + best[i + 1][mask | (1 << g)] == target
            })
            .expect("dp witness");
        pairs.push((i, g));
        mask |= 1 << g;
    }
    let counts = counts_for(pred, gold, &pairs);
    RecordMatch { pairs, counts }
}

/// Aligns predicted and gold records of one event type and counts arguments.
///
/// The assignment maximizes the number of shared (role, argument) entries; it is solved exactly
/// for up to [`EXACT_MATCH_LIMIT`] gold records and greedily beyond.
pub fn match_records(pred: &[SurfaceRecord], gold: &[SurfaceRecord]) -> RecordMatch {
    if gold.len() <= EXACT_MATCH_LIMIT {
        optimal_match(pred, gold)
    } else {
        greedy_match(pred, gold)
    }
}

/// Per-event-type counts for one document.
pub fn score_document(
    pred: &[SurfaceRecord],
    gold: &[SurfaceRecord],
    num_event_types: usize,
) -> Vec<Counts> {
    (0..num_event_types)
        .map(|et| {
            let p: Vec<SurfaceRecord> = pred
                .iter()
                .filter(|r| r.event_type == et)
                .cloned()
                .collect();
            let g: Vec<SurfaceRecord> = gold
                .iter()
                .filter(|r| r.event_type == et)
                .cloned()
                .collect();
            match_records(&p, &g).counts
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(args: &[Option<&str>]) -> SurfaceRecord {
        SurfaceRecord {
            event_type: 0,
            args: args.iter().map(|a| a.map(str::to_string)).collect(),
        }
    }

    #[test]
    fn identical_records_are_all_true_positives() {
        let g = rec(&[Some("a"), Some("b"), Some("c"), Some("d")]);
        let m = match_records(&[g.clone()], &[g]);
        assert_eq!(
            m.counts,
            Counts {
                tp: 4,
                fp: 0,
                fn_: 0
            }
        );
    }

    #[test]
    fn missing_argument_is_one_false_negative() {
        let g = rec(&[Some("a"), Some("b"), Some("c"), Some("d")]);
        let p = rec(&[Some("a"), Some("b"), Some("c"), None]);
        let m = match_records(&[p], &[g]);
        assert_eq!(
            m.counts,
            Counts {
                tp: 3,
                fp: 0,
                fn_: 1
            }
        );
    }

    #[test]
    fn greedy_is_suboptimal_on_crossed_preferences() {
        // P0 shares 3 with G0 and 2 with G1; P1 shares 2 with G0 and none with G1.
        let g0 = rec(&[Some("a"), Some("b"), Some("c"), Some("x"), Some("y")]);
        let g1 = rec(&[Some("a"), Some("b"), Some("q"), Some("r"), Some("s")]);
        let p0 = rec(&[Some("a"), Some("b"), Some("c"), None, None]);
        let p1 = rec(&[None, None, None, Some("x"), Some("y")]);
        let greedy = greedy_match(&[p0.clone(), p1.clone()], &[g0.clone(), g1.clone()]);
        let exact = match_records(&[p0, p1], &[g0, g1]);
        assert_eq!(greedy.counts.tp, 3);
        assert_eq!(exact.counts.tp, 4);
        assert_eq!(exact.pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn unmatched_gold_counts_as_false_negatives() {
        let g = rec(&[Some("a"), Some("b")]);
        let m = match_records(&[], &[g]);
        assert_eq!(
            m.counts,
            Counts {
                tp: 0,
                fp: 0,
                fn_: 2
            }
        );
        let m = match_records(&[rec(&[Some("z"), None])], &[]);
        assert_eq!(
            m.counts,
            Counts {
                tp: 0,
                fp: 1,
                fn_: 0
            }
        );
    }

    #[test]
    fn document_scoring_separates_event_types() {
        let mut other = rec(&[Some("a"), Some("b")]);
        other.event_type = 1;
        let g = rec(&[Some("a"), Some("b")]);
        let c = score_document(&[other], &[g], 2);
        assert_eq!(
            c[0],
            Counts {
                tp: 0,
                fp: 0,
                fn_: 2
            }
        );
        assert_eq!(
            c[1],
            Counts {
                tp: 0,
                fp: 2,
                fn_: 0
            }
        );
    }
}
