//! JSON-lines dataset files: one annotated document per line.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ontology::{
    AnnotatedDocument, Document, Entity, EntityMention, EventOntology, EventRecord,
    DEFAULT_MAX_SENTENCES, DEFAULT_MAX_SENTENCE_LEN,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_sentences: usize,
    pub max_sentence_len: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_sentences: DEFAULT_MAX_SENTENCES,
            max_sentence_len: DEFAULT_MAX_SENTENCE_LEN,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Dataset {
    pub split: String,
    pub docs: Vec<AnnotatedDocument>,
}

impl Dataset {
    pub fn new(split: impl Into<String>, docs: Vec<AnnotatedDocument>) -> Self {
        Dataset {
            split: split.into(),
            docs,
        }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

/// Entity ids may be written as strings or integers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum IdRepr {
    Str(String),
    Num(u64),
}

impl IdRepr {
    fn key(&self) -> String {
        match self {
            IdRepr::Str(s) => s.clone(),
            IdRepr::Num(n) => n.to_string(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct MentionLine {
    sent: usize,
    start: usize,
    end: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct EntityLine {
    id: IdRepr,
    #[serde(rename = "type")]
    entity_type: String,
    mentions: Vec<MentionLine>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RecordLine {
    event_type: String,
    args: BTreeMap<String, IdRepr>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct DocLine {
    doc_id: String,
    sentences: Vec<Vec<String>>,
    #[serde(default)]
    entities: Vec<EntityLine>,
    #[serde(default)]
    records: Vec<RecordLine>,
}

/// Reads and validates a dataset file. Errors carry the 1-based line number.
pub fn ingest_dataset(path: &Path, ontology: &EventOntology, limits: Limits) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let split = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_dataset(
        std::io::BufReader::new(file),
        &path.display().to_string(),
        &split,
        ontology,
        limits,
    )
}

pub fn read_dataset(
    reader: impl BufRead,
    source: &str,
    split: &str,
    ontology: &EventOntology,
    limits: Limits,
) -> Result<Dataset> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: DocLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: source.to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        docs.push(convert(parsed, source, i + 1, ontology, limits)?);
    }
    Ok(Dataset::new(split, docs))
}

pub fn parse_document_line(
    line: &str,
    ontology: &EventOntology,
    limits: Limits,
) -> Result<AnnotatedDocument> {
    let parsed: DocLine = serde_json::from_str(line).map_err(|e| Error::Parse {
        path: "<line>".into(),
        line: 1,
        msg: e.to_string(),
    })?;
    convert(parsed, "<line>", 1, ontology, limits)
}

fn convert(
    doc: DocLine,
    source: &str,
    line: usize,
    ontology: &EventOntology,
    limits: Limits,
) -> Result<AnnotatedDocument> {
    let refer = |msg: String| Error::Reference {
        path: source.to_string(),
        line,
        doc_id: doc.doc_id.clone(),
        msg,
    };
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for (k, e) in doc.entities.iter().enumerate() {
        if index.insert(e.id.key(), k).is_some() {
            return Err(refer(format!("duplicate entity id {:?}", e.id.key())));
        }
        if ontology.entity_type_index(&e.entity_type).is_none() {
            return Err(refer(format!(
                "entity {:?} has unknown type {:?}",
                e.id.key(),
                e.entity_type
            )));
        }
        if e.mentions.is_empty() {
            return Err(refer(format!("entity {:?} has no mentions", e.id.key())));
        }
        for m in &e.mentions {
            let len = doc.sentences.get(m.sent).map(Vec::len);
            match len {
                Some(len) if m.start < m.end && m.end <= len => {}
                _ => {
                    return Err(refer(format!(
                        "mention {{sent: {}, start: {}, end: {}}} of entity {:?} lies outside the document",
                        m.sent,
                        m.start,
                        m.end,
                        e.id.key()
                    )))
                }
            }
        }
    }
    let mut records = Vec::with_capacity(doc.records.len());
    for r in &doc.records {
        let et = ontology
            .event_index(&r.event_type)
            .ok_or_else(|| refer(format!("unknown event type {:?}", r.event_type)))?;
        let def = &ontology.event_types[et];
        let mut args = vec![None; def.roles.len()];
        for (role, id) in &r.args {
            let ri = def
                .role_index(role)
                .ok_or_else(|| refer(format!("event type {} has no role {:?}", def.name, role)))?;
            let e = *index
                .get(&id.key())
                .ok_or_else(|| refer(format!("record cites unknown entity {:?}", id.key())))?;
            args[ri] = Some(e);
        }
        records.push(EventRecord {
            event_type: et,
            args,
        });
    }

    let document = Document::new(
        doc.doc_id.clone(),
        doc.sentences,
        limits.max_sentences,
        limits.max_sentence_len,
    );
    // Drop mentions cut by truncation, then entities left without mentions.
    let mut remap = vec![None; doc.entities.len()];
    let mut entities = Vec::new();
    for (k, e) in doc.entities.iter().enumerate() {
        let new_idx = entities.len();
        let mentions: Vec<EntityMention> = e
            .mentions
            .iter()
            .filter(|m| {
                m.sent < document.sentences.len() && m.end <= document.sentences[m.sent].len()
            })
            .map(|m| EntityMention {
                sentence: m.sent,
                start: m.start,
                end: m.end,
                entity: new_idx,
            })
            .collect();
        if mentions.is_empty() {
            continue;
        }
        remap[k] = Some(new_idx);
        entities.push(Entity {
            key: e.id.key(),
            entity_type: e.entity_type.clone(),
            mentions,
        });
    }
    for r in &mut records {
        for a in &mut r.args {
            *a = a.and_then(|e| remap[e]);
        }
    }
    records.retain(|r| r.num_filled() > 0);
    Ok(AnnotatedDocument {
        document,
        entities,
        records,
    })
}

pub fn document_to_json(doc: &AnnotatedDocument, ontology: &EventOntology) -> String {
    let line = DocLine {
        doc_id: doc.document.doc_id.clone(),
        sentences: doc.document.sentences.clone(),
        entities: doc
            .entities
            .iter()
            .map(|e| EntityLine {
                id: IdRepr::Str(e.key.clone()),
                entity_type: e.entity_type.clone(),
                mentions: e
                    .mentions
                    .iter()
                    .map(|m| MentionLine {
                        sent: m.sentence,
                        start: m.start,
                        end: m.end,
                    })
                    .collect(),
            })
            .collect(),
        records: doc
            .records
            .iter()
            .map(|r| {
                let def = &ontology.event_types[r.event_type];
                RecordLine {
                    event_type: def.name.clone(),
                    args: r
                        .filled()
                        .map(|(role, e)| {
                            (
                                def.roles[role].clone(),
                                IdRepr::Str(doc.entities[e].key.clone()),
                            )
                        })
                        .collect(),
                }
            })
            .collect(),
    };
    serde_json::to_string(&line).expect("document serializes")
}

pub fn write_dataset(
    w: &mut impl Write,
    dataset: &Dataset,
    ontology: &EventOntology,
) -> Result<()> {
    for d in &dataset.docs {
        writeln!(w, "{}", document_to_json(d, ontology))?;
    }
    Ok(())
}

pub fn save_dataset(path: &Path, dataset: &Dataset, ontology: &EventOntology) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_dataset(&mut f, dataset, ontology)?;
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ont() -> EventOntology {
        EventOntology::equity_default()
    }

    fn read(text: &str) -> Result<Dataset> {
        read_dataset(text.as_bytes(), "mem", "train", &ont(), Limits::default())
    }

    const ONE: &str = r#"{"doc_id":"d1","sentences":[["A","pledged","S","to","B"]],"entities":[{"id":"e1","type":"ORG","mentions":[{"sent":0,"start":0,"end":1}]},{"id":2,"type":"SHARES","mentions":[{"sent":0,"start":2,"end":3}]},{"id":"e3","type":"ORG","mentions":[{"sent":0,"start":4,"end":5}]}],"records":[{"event_type":"EquityPledge","args":{"Pledger":"e1","PledgedShares":2,"Pledgee":"e3"}}]}"#;

    #[test]
    fn single_document_file() {
        let ds = read(ONE).unwrap();
        assert_eq!(ds.len(), 1);
        let d = &ds.docs[0];
        assert_eq!(
            d.records[0].args,
            vec![Some(0), Some(1), Some(2), None, None]
        );
        assert_eq!(d.entities[1].key, "2");
    }

    #[test]
    fn unknown_entity_names_doc_and_line() {
        let bad = ONE.replace("\"Pledgee\":\"e3\"", "\"Pledgee\":\"missing\"");
        let text = format!("{ONE}\n{bad}\n");
        let err = read(&text).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Reference { line: 2, .. }), "{msg}");
        assert!(msg.contains("d1") && msg.contains("missing"), "{msg}");
    }

    #[test]
    fn malformed_line_is_a_parse_error() {
        let err = read("{\"doc_id\": 3").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        assert!(read("").unwrap().is_empty());
    }

    #[test]
    fn mention_outside_document_is_rejected() {
        let bad = ONE.replace("\"start\":4,\"end\":5", "\"start\":4,\"end\":9");
        assert!(matches!(read(&bad), Err(Error::Reference { .. })));
    }

    #[test]
    fn json_round_trip() {
        let ds = read(ONE).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds, &ont()).unwrap();
        let back = read(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.docs, ds.docs);
    }

    #[test]
    fn truncation_drops_cut_mentions_and_args() {
        let limits = Limits {
            max_sentences: 128,
            max_sentence_len: 4,
        };
        let ds = read_dataset(ONE.as_bytes(), "mem", "t", &ont(), limits).unwrap();
        let d = &ds.docs[0];
        assert!(d.document.truncated);
        assert_eq!(d.entities.len(), 2);
        assert_eq!(d.records[0].args, vec![Some(0), Some(1), None, None, None]);
    }
}
