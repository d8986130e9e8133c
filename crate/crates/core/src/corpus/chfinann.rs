//! Reader for the public ChFinAnn release: a JSON array of `[doc_id, annotation]` pairs with
//! character-offset mention ranges.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::dataset::{parse_document_line, Dataset, Limits};
use crate::ontology::{EventOntology, EventTypeDef, ONTOLOGY_SCHEMA_VERSION};
use crate::{Error, Result};

/// Entity type for mention spans whose guessed field is not a known role.
pub const OTHER_ENTITY_TYPE: &str = "OtherType";

const EVENT_TABLE: [(&str, &[&str]); 5] = [
    (
        "EquityFreeze",
        &[
            "EquityHolder",
            "FrozeShares",
            "LegalInstitution",
            "TotalHoldingShares",
            "TotalHoldingRatio",
            "StartDate",
            "EndDate",
            "UnfrozeDate",
        ],
    ),
    (
        "EquityRepurchase",
        &[
            "CompanyName",
            "HighestTradingPrice",
            "LowestTradingPrice",
            "RepurchasedShares",
            "ClosingDate",
            "RepurchaseAmount",
        ],
    ),
    (
        "EquityUnderweight",
        &[
            "EquityHolder",
            "TradedShares",
            "StartDate",
            "EndDate",
            "LaterHoldingShares",
            "AveragePrice",
        ],
    ),
    (
        "EquityOverweight",
        &[
            "EquityHolder",
            "TradedShares",
            "StartDate",
            "EndDate",
            "LaterHoldingShares",
            "AveragePrice",
        ],
    ),
    (
        "EquityPledge",
        &[
            "Pledger",
            "PledgedShares",
            "Pledgee",
            "TotalHoldingShares",
            "TotalHoldingRatio",
            "TotalPledgedShares",
            "StartDate",
            "EndDate",
            "ReleasedDate",
        ],
    ),
];

/// The five ChFinAnn event types with their role orders. Entity types are the role names
/// (the release labels each span with the field it most likely fills) plus [`OTHER_ENTITY_TYPE`].
pub fn chfinann_ontology() -> EventOntology {
    let mut entity_types: Vec<String> = Vec::new();
    let event_types = EVENT_TABLE
        .iter()
        .map(|(name, roles)| {
            for r in *roles {
                if !entity_types.iter().any(|t| t == r) {
                    entity_types.push(r.to_string());
                }
            }
            EventTypeDef {
                name: name.to_string(),
                roles: roles.iter().map(|r| r.to_string()).collect(),
                role_entity_types: BTreeMap::new(),
            }
        })
        .collect();
    entity_types.push(OTHER_ENTITY_TYPE.to_string());
    EventOntology {
        schema_version: ONTOLOGY_SCHEMA_VERSION,
        event_types,
        entity_types,
    }
}

#[derive(Deserialize)]
struct Annotation {
    sentences: Vec<String>,
    #[serde(default)]
    ann_valid_mspans: Vec<String>,
    #[serde(default)]
    ann_mspan2dranges: BTreeMap<String, Vec<[usize; 3]>>,
    #[serde(default)]
    ann_mspan2guess_field: BTreeMap<String, String>,
    #[serde(default)]
    recguid_eventname_eventdict_list:
        Vec<(serde_json::Value, String, BTreeMap<String, Option<String>>)>,
}

/// Rewrites one release document as a dataset line (character tokens, span-keyed entities).
fn to_doc_line(doc_id: &str, ann: &Annotation, ontology: &EventOntology) -> serde_json::Value {
    let sentences: Vec<Vec<String>> = ann
        .sentences
        .iter()
        .map(|s| s.chars().map(String::from).collect())
        .collect();
    let mut order: Vec<&String> = ann
        .ann_valid_mspans
        .iter()
        .filter(|m| ann.ann_mspan2dranges.contains_key(*m))
        .collect();
    for m in ann.ann_mspan2dranges.keys() {
        if !order.contains(&m) {
            order.push(m);
        }
    }
    let entities: Vec<serde_json::Value> = order
        .iter()
        .map(|span| {
            let field = ann.ann_mspan2guess_field.get(*span).map(String::as_str);
            let ty = match field {
                Some(f) if ontology.entity_type_index(f).is_some() => f,
                _ => OTHER_ENTITY_TYPE,
            };
            let mentions: Vec<serde_json::Value> = ann.ann_mspan2dranges[*span]
                .iter()
                .map(|[sent, start, end]| serde_json::json!({ "sent": sent, "start": start, "end": end }))
                .collect();
            serde_json::json!({ "id": span, "type": ty, "mentions": mentions })
        })
        .collect();
    let records: Vec<serde_json::Value> = ann
        .recguid_eventname_eventdict_list
        .iter()
        .map(|(_, event, args)| {
            let filled: BTreeMap<&String, &String> = args
                .iter()
                .filter_map(|(role, span)| span.as_ref().map(|s| (role, s)))
                .collect();
            serde_json::json!({ "event_type": event, "args": filled })
        })
        .collect();
    serde_json::json!({
        "doc_id": doc_id,
        "sentences": sentences,
        "entities": entities,
        "records": records,
    })
}

/// Parses a release file's text. Errors name the 1-based position of the document in the array.
pub fn parse_chfinann(
    text: &str,
    source: &str,
    split: &str,
    ontology: &EventOntology,
    limits: Limits,
) -> Result<Dataset> {
    let raw: Vec<(String, Annotation)> = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: source.to_string(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let mut docs = Vec::with_capacity(raw.len());
    for (i, (doc_id, ann)) in raw.iter().enumerate() {
        let line = to_doc_line(doc_id, ann, ontology).to_string();
        let doc = parse_document_line(&line, ontology, limits).map_err(|e| match e {
            Error::Reference { doc_id, msg, .. } => Error::Reference {
                path: source.to_string(),
                line: i + 1,
                doc_id,
                msg,
            },
            Error::Parse { msg, .. } => Error::Parse {
                path: source.to_string(),
                line: i + 1,
                msg,
            },
            other => other,
        })?;
        docs.push(doc);
    }
    Ok(Dataset::new(split, docs))
}

pub fn ingest_chfinann(path: &Path, ontology: &EventOntology, limits: Limits) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let split = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_chfinann(&text, &path.display().to_string(), &split, ontology, limits)
}
