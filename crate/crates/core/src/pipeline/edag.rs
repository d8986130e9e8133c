//! Role-ordered path expansion shared by the trained decoder and the oracle.

use crate::corpus::labels::{Arg, EdagTree};
use crate::ontology::EventRecord;
use crate::Result;

/// Default cap on simultaneously expanded paths per event type.
pub const DEFAULT_BRANCH_CAP: usize = 8;

/// Scores the options for the next role of a partial path.
pub trait StepScorer {
    /// Probability of each option in `options` extending `prefix` at role `prefix.len()`.
    fn score(&mut self, event_type: usize, prefix: &[Arg], options: &[Arg]) -> Result<Vec<f64>>;
}

/// Emits 1 for options that are gold children of the prefix and 0 otherwise.
pub struct OracleScorer<'a> {
    pub trees: &'a [EdagTree],
}

impl StepScorer for OracleScorer<'_> {
    fn score(&mut self, event_type: usize, prefix: &[Arg], options: &[Arg]) -> Result<Vec<f64>> {
        let children = self
            .trees
            .iter()
            .find(|t| t.event_type == event_type)
            .and_then(|t| t.children(prefix))
            .unwrap_or_default();
        Ok(options
            .iter()
            .map(|o| if children.contains(o) { 1.0 } else { 0.0 })
            .collect())
    }
}

/// Expands paths role by role.
///
/// Every option with probability strictly above 0.5 opens a branch; when none does, the path
/// continues with NONE. After each role only the `cap` paths with the highest summed
/// log-probability survive (ties keep expansion order). Leaves become records; records without
/// any argument and duplicates are dropped.
pub fn decode_event_type<S: StepScorer + ?Sized>(
    scorer: &mut S,
    event_type: usize,
    num_roles: usize,
    options: &dyn Fn(usize) -> Vec<Arg>,
    cap: usize,
) -> Result<Vec<EventRecord>> {
    let mut paths: Vec<(Vec<Arg>, f64)> = vec![(Vec::new(), 0.0)];
    for role in 0..num_roles {
        let opts = options(role);
        let mut next = Vec::new();
        for (prefix, score) in &paths {
            let probs = scorer.score(event_type, prefix, &opts)?;
            let mut any = false;
            for (o, &p) in opts.iter().zip(&probs) {
                if p > 0.5 {
                    any = true;
                    let mut np = prefix.clone();
                    np.push(*o);
                    next.push((np, score + p.max(1e-12).ln()));
                }
            }
            if !any {
                let p_none = opts
                    .iter()
                    .zip(&probs)
                    .find(|(o, _)| o.is_none())
                    .map_or(0.5, |(_, &p)| p);
                let mut np = prefix.clone();
                np.push(None);
                next.push((np, score + (1.0 - p_none).max(p_none).max(1e-12).ln()));
            }
        }
        next.sort_by(|a, b| b.1.total_cmp(&a.1));
        next.truncate(cap.max(1));
        paths = next;
    }
    let mut out: Vec<EventRecord> = Vec::new();
    for (args, _) in paths {
        let r = EventRecord { event_type, args };
        if r.num_filled() > 0 && !out.contains(&r) {
            out.push(r);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant(f64);

    impl StepScorer for Constant {
        fn score(&mut self, _: usize, _: &[Arg], options: &[Arg]) -> Result<Vec<f64>> {
            Ok(vec![self.0; options.len()])
        }
    }

    fn all_options(n: usize) -> impl Fn(usize) -> Vec<Arg> {
        move |_| (0..n).map(Some).chain([None]).collect()
    }

    #[test]
    fn oracle_reproduces_branching_records() {
        // Two pledges by the same pledger to different pledgees.
        let records = vec![
            EventRecord {
                event_type: 0,
                args: vec![Some(0), Some(1), Some(2), Some(4), None],
            },
            EventRecord {
                event_type: 0,
                args: vec![Some(0), Some(1), Some(3), Some(4), None],
            },
        ];
        let tree = EdagTree::from_records(0, 5, &records);
        assert_eq!(tree.leaf_count(), 2);
        let trees = [tree];
        let mut oracle = OracleScorer { trees: &trees };
        let got =
            decode_event_type(&mut oracle, 0, 5, &all_options(5), DEFAULT_BRANCH_CAP).unwrap();
        assert_eq!(got, records);
        assert_eq!(got[0].args[0], got[1].args[0]);
    }

    #[test]
    fn branching_is_capped() {
        let got = decode_event_type(&mut Constant(0.9), 0, 4, &all_options(2), 8).unwrap();
        assert!(got.len() <= 8);
        assert!(!got.is_empty());
    }

    #[test]
    fn threshold_is_strict() {
        let got = decode_event_type(&mut Constant(0.5), 0, 3, &all_options(2), 8).unwrap();
        assert!(got.is_empty());
    }

    #[test]
    fn untriggered_oracle_yields_nothing() {
        let mut oracle = OracleScorer { trees: &[] };
        let got = decode_event_type(&mut oracle, 1, 3, &all_options(3), 8).unwrap();
        assert!(got.is_empty());
    }
}
