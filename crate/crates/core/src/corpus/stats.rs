//! Corpus statistics: relation counts per split and generator diagnostics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::labels::derive_gold_relations;
use super::Dataset;
use crate::ontology::{AnnotatedDocument, EventRecord, RelationSchema};

/// Number of distinct sentences holding a mention of any argument of `record`.
pub fn record_scatter(doc: &AnnotatedDocument, record: &EventRecord) -> usize {
    let sentences: BTreeSet<usize> = record
        .filled()
        .flat_map(|(_, e)| doc.entities[e].mentions.iter().map(|m| m.sentence))
        .collect();
    sentences.len()
}

/// Mean record scatter of a document; 0 for a document without records.
pub fn document_scatter(doc: &AnnotatedDocument) -> f64 {
    if doc.records.is_empty() {
        return 0.0;
    }
    let total: usize = doc.records.iter().map(|r| record_scatter(doc, r)).sum();
    total as f64 / doc.records.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStatistics {
    pub docs: usize,
    pub records: usize,
    pub mean_records_per_doc: f64,
    pub multi_event_fraction: f64,
    /// Mean over records of [`record_scatter`].
    pub mean_scatter: f64,
    /// Fraction of records touching more than one sentence.
    pub cross_sentence_fraction: f64,
    /// Fraction of multi-record documents where two records share an argument entity.
    pub shared_argument_fraction: f64,
    pub mean_sentences: f64,
    pub truncated_docs: usize,
}

pub fn corpus_statistics(ds: &Dataset) -> CorpusStatistics {
    let docs = ds.docs.len();
    let records: usize = ds.docs.iter().map(|d| d.records.len()).sum();
    let multi: Vec<&AnnotatedDocument> = ds.docs.iter().filter(|d| d.records.len() > 1).collect();
    let scatters: Vec<usize> = ds
        .docs
        .iter()
        .flat_map(|d| d.records.iter().map(move |r| record_scatter(d, r)))
        .collect();
    let shared = multi
        .iter()
        .filter(|d| {
            let mut seen = BTreeSet::new();
            d.records.iter().any(|r| {
                let own: BTreeSet<usize> = r.filled().map(|(_, e)| e).collect();
                let hit = own.iter().any(|e| seen.contains(e));
                seen.extend(own);
                hit
            })
        })
        .count();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    CorpusStatistics {
        docs,
        records,
        mean_records_per_doc: ratio(records, docs),
        multi_event_fraction: ratio(multi.len(), docs),
        mean_scatter: ratio(scatters.iter().sum(), scatters.len()),
        cross_sentence_fraction: ratio(scatters.iter().filter(|&&s| s > 1).count(), scatters.len()),
        shared_argument_fraction: ratio(shared, multi.len()),
        mean_sentences: ratio(
            ds.docs.iter().map(|d| d.document.sentences.len()).sum(),
            docs,
        ),
        truncated_docs: ds.docs.iter().filter(|d| d.document.truncated).count(),
    }
}

/// Relation-type counts per split, keyed by bare relation name.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationStatistics {
    pub splits: Vec<String>,
    /// `(bare name, count per split)` sorted by the first split's count, descending, then name.
    pub rows: Vec<(String, Vec<usize>)>,
}

/// Counts each document's deduplicated gold triples: a triple produced by several records of
/// one document counts once.
pub fn relation_statistics(splits: &[&Dataset], schema: &RelationSchema) -> RelationStatistics {
    let mut counts: BTreeMap<String, Vec<usize>> = schema
        .bare_names()
        .into_iter()
        .map(|n| (n, vec![0; splits.len()]))
        .collect();
    for (s, ds) in splits.iter().enumerate() {
        for d in &ds.docs {
            for t in derive_gold_relations(&d.records, schema) {
                counts.get_mut(schema.name(t.relation)).expect("bare name")[s] += 1;
            }
        }
    }
    let mut rows: Vec<(String, Vec<usize>)> = counts.into_iter().collect();
    rows.sort_by(|a, b| {
        let ka = a.1.first().copied().unwrap_or(0);
        let kb = b.1.first().copied().unwrap_or(0);
        kb.cmp(&ka).then_with(|| a.0.cmp(&b.0))
    });
    RelationStatistics {
        splits: splits.iter().map(|d| d.split.clone()).collect(),
        rows,
    }
}

impl RelationStatistics {
    pub fn count(&self, relation: &str, split: usize) -> Option<usize> {
        self.rows
            .iter()
            .find(|(n, _)| n == relation)
            .map(|(_, c)| c[split])
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str("# counts are distinct (head, tail, relation) triples per document; a triple shared by several records of one document is counted once\n");
        out.push_str("relation_type");
        for s in &self.splits {
            let _ = write!(out, "\t{s}");
        }
        out.push('\n');
        for (name, c) in &self.rows {
            out.push_str(name);
            for v in c {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::{derive_relation_schema, EventOntology};

    #[test]
    fn empty_dataset_gives_zero_counts() {
        let s = derive_relation_schema(&EventOntology::equity_default());
        let empty = Dataset::new("train", vec![]);
        let st = relation_statistics(&[&empty], &s);
        assert!(st.rows.iter().all(|(_, c)| c == &vec![0]));
        assert_eq!(st.rows.len(), s.bare_names().len());
    }

    #[test]
    fn three_filled_roles_count_once_each() {
        let o = EventOntology::equity_default();
        let s = derive_relation_schema(&o);
        let line = r#"{"doc_id":"d","sentences":[["a","b","c"]],"entities":[{"id":"x","type":"ORG","mentions":[{"sent":0,"start":0,"end":1}]},{"id":"y","type":"SHARES","mentions":[{"sent":0,"start":1,"end":2}]},{"id":"z","type":"ORG","mentions":[{"sent":0,"start":2,"end":3}]}],"records":[{"event_type":"EquityPledge","args":{"Pledger":"x","PledgedShares":"y","Pledgee":"z"}}]}"#;
        let d = crate::corpus::parse_document_line(line, &o, Default::default()).unwrap();
        let ds = Dataset::new("train", vec![d]);
        let st = relation_statistics(&[&ds], &s);
        for n in [
            "Pledger2PledgedShares",
            "Pledger2Pledgee",
            "PledgedShares2Pledgee",
        ] {
            assert_eq!(st.count(n, 0), Some(1), "{n}");
        }
        let nonzero = st.rows.iter().filter(|(_, c)| c[0] > 0).count();
        assert_eq!(nonzero, 3);
        assert_eq!(st.rows[0].1[0], 1);
        assert!(st
            .to_tsv()
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("relation_type\ttrain"));
    }
}
