//! Event ontology, the annotated document model and the derived relation schema.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const ONTOLOGY_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_MAX_SENTENCES: usize = 128;
pub const DEFAULT_MAX_SENTENCE_LEN: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTypeDef {
    pub name: String,
    /// Roles in pre-order. The order fixes relation direction and decoding order.
    pub roles: Vec<String>,
    /// Allowed entity types per role. A role missing from the map accepts any type.
    #[serde(default)]
    pub role_entity_types: BTreeMap<String, Vec<String>>,
}

impl EventTypeDef {
    pub fn role_index(&self, role: &str) -> Option<usize> {
        self.roles.iter().position(|r| r == role)
    }

    pub fn role_accepts(&self, role: usize, entity_type: &str) -> bool {
        match self.role_entity_types.get(&self.roles[role]) {
            Some(allowed) if !allowed.is_empty() => allowed.iter().any(|t| t == entity_type),
            _ => true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventOntology {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub event_types: Vec<EventTypeDef>,
    pub entity_types: Vec<String>,
}

fn default_schema_version() -> u32 {
    ONTOLOGY_SCHEMA_VERSION
}

impl EventOntology {
    pub fn event_index(&self, name: &str) -> Option<usize> {
        self.event_types.iter().position(|e| e.name == name)
    }

    pub fn entity_type_index(&self, name: &str) -> Option<usize> {
        self.entity_types.iter().position(|e| e == name)
    }

    /// Parses an ontology file and rejects it if any invariant is violated.
    pub fn from_json(text: &str) -> Result<Self> {
        let ontology: EventOntology = serde_json::from_str(text)?;
        if ontology.schema_version != ONTOLOGY_SCHEMA_VERSION {
            return Err(Error::Ontology(format!(
                "unsupported schema_version {} (expected {ONTOLOGY_SCHEMA_VERSION})",
                ontology.schema_version
            )));
        }
        let violations = validate_ontology(&ontology);
        if !violations.is_empty() {
            return Err(Error::Ontology(violations.join("; ")));
        }
        Ok(ontology)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ontology serializes")
    }

    /// Equity-event ontology bundled with the crate and used by the synthetic generator.
    pub fn equity_default() -> Self {
        fn ev(name: &str, roles: &[(&str, &[&str])]) -> EventTypeDef {
            EventTypeDef {
                name: name.to_string(),
                roles: roles.iter().map(|(r, _)| r.to_string()).collect(),
                role_entity_types: roles
                    .iter()
                    .map(|(r, ts)| (r.to_string(), ts.iter().map(|t| t.to_string()).collect()))
                    .collect(),
            }
        }
        EventOntology {
            schema_version: ONTOLOGY_SCHEMA_VERSION,
            event_types: vec![
                ev(
                    "EquityPledge",
                    &[
                        ("Pledger", &["ORG", "PER"]),
                        ("PledgedShares", &["SHARES"]),
                        ("Pledgee", &["ORG"]),
                        ("StartDate", &["DATE"]),
                        ("EndDate", &["DATE"]),
                    ],
                ),
                ev(
                    "EquityFreeze",
                    &[
                        ("EquityHolder", &["ORG", "PER"]),
                        ("FrozeShares", &["SHARES"]),
                        ("LegalInstitution", &["ORG"]),
                        ("StartDate", &["DATE"]),
                        ("EndDate", &["DATE"]),
                    ],
                ),
                ev(
                    "EquityRepurchase",
                    &[
                        ("CompanyName", &["ORG"]),
                        ("RepurchasedShares", &["SHARES"]),
                        ("ClosingDate", &["DATE"]),
                    ],
                ),
            ],
            entity_types: ["ORG", "PER", "SHARES", "DATE"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

/// Lists every ontology invariant violation; an empty list means the ontology is valid.
pub fn validate_ontology(ontology: &EventOntology) -> Vec<String> {
    let mut violations = Vec::new();
    let mut seen_types = BTreeSet::new();
    for et in &ontology.event_types {
        if !seen_types.insert(et.name.as_str()) {
            violations.push(format!(
                "event type {:?} is declared more than once",
                et.name
            ));
        }
        if et.roles.is_empty() {
            violations.push(format!("event type {:?} has no roles", et.name));
        }
        let mut seen = BTreeSet::new();
        for role in &et.roles {
            if !seen.insert(role.as_str()) {
                violations.push(format!(
                    "event type {:?} declares role {:?} more than once",
                    et.name, role
                ));
            }
        }
        for (role, types) in &et.role_entity_types {
            if !et.roles.contains(role) {
                violations.push(format!(
                    "event type {:?} constrains unknown role {:?}",
                    et.name, role
                ));
            }
            for t in types {
                if !ontology.entity_types.contains(t) {
                    violations.push(format!(
                        "event type {:?} role {:?} allows unknown entity type {:?}",
                        et.name, role, t
                    ));
                }
            }
        }
    }
    violations
}

/// How raw text is split into tokens and how tokens are joined back into surfaces.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tokenization {
    #[default]
    Char,
    Whitespace,
}

impl Tokenization {
    pub fn tokenize(self, text: &str) -> Vec<String> {
        match self {
            Tokenization::Char => text
                .chars()
                .filter(|c| !c.is_whitespace())
                .map(|c| c.to_string())
                .collect(),
            Tokenization::Whitespace => text.split_whitespace().map(str::to_string).collect(),
        }
    }

    /// Normalized surface of a token span: joined and trimmed, no case folding.
    pub fn surface(self, tokens: &[String]) -> String {
        let sep = match self {
            Tokenization::Char => "",
            Tokenization::Whitespace => " ",
        };
        tokens.join(sep).trim().to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<Vec<String>>,
    /// Set when sentences or tokens were dropped to fit the length limits.
    #[serde(default)]
    pub truncated: bool,
}

impl Document {
    /// Builds a document, dropping trailing sentences/tokens beyond the limits.
    pub fn new(
        doc_id: impl Into<String>,
        mut sentences: Vec<Vec<String>>,
        max_sentences: usize,
        max_sentence_len: usize,
    ) -> Self {
        let mut truncated = false;
        if sentences.len() > max_sentences {
            sentences.truncate(max_sentences);
            truncated = true;
        }
        for s in &mut sentences {
            if s.len() > max_sentence_len {
                s.truncate(max_sentence_len);
                truncated = true;
            }
        }
        Document {
            doc_id: doc_id.into(),
            sentences,
            truncated,
        }
    }

    pub fn from_text(
        doc_id: impl Into<String>,
        sentences: &[&str],
        tokenization: Tokenization,
    ) -> Self {
        Self::new(
            doc_id,
            sentences.iter().map(|s| tokenization.tokenize(s)).collect(),
            DEFAULT_MAX_SENTENCES,
            DEFAULT_MAX_SENTENCE_LEN,
        )
    }

    pub fn num_sentences(&self) -> usize {
        self.sentences.len()
    }

    pub fn span_tokens(&self, m: &EntityMention) -> &[String] {
        &self.sentences[m.sentence][m.start..m.end]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityMention {
    pub sentence: usize,
    /// Half-open token span `[start, end)`.
    pub start: usize,
    pub end: usize,
    /// Index into the owning document's entity list.
    pub entity: usize,
}

impl EntityMention {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &EntityMention) -> bool {
        self.sentence == other.sentence && self.start < other.end && other.start < self.end
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    /// Identifier as it appears in the dataset file.
    pub key: String,
    pub entity_type: String,
    pub mentions: Vec<EntityMention>,
}

/// An event record: one optional argument (entity index) per role of its event type.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EventRecord {
    pub event_type: usize,
    pub args: Vec<Option<usize>>,
}

impl EventRecord {
    pub fn filled(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.args
            .iter()
            .enumerate()
            .filter_map(|(r, a)| a.map(|e| (r, e)))
    }

    pub fn num_filled(&self) -> usize {
        self.args.iter().filter(|a| a.is_some()).count()
    }
}

/// A document together with its gold entities and records.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedDocument {
    pub document: Document,
    pub entities: Vec<Entity>,
    pub records: Vec<EventRecord>,
}

impl AnnotatedDocument {
    pub fn mentions(&self) -> Vec<EntityMention> {
        let mut all: Vec<EntityMention> = self
            .entities
            .iter()
            .flat_map(|e| e.mentions.iter().copied())
            .collect();
        all.sort_by_key(|m| (m.sentence, m.start, m.end, m.entity));
        all
    }

    pub fn entity_surface(&self, entity: usize, tokenization: Tokenization) -> String {
        let m = &self.entities[entity].mentions[0];
        tokenization.surface(self.document.span_tokens(m))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationTriple {
    pub head: usize,
    pub tail: usize,
    /// Index into [`RelationSchema::relation_types`].
    pub relation: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationType {
    pub event_type: usize,
    pub head_role: usize,
    pub tail_role: usize,
    /// Bare `<HeadRole>2<TailRole>` name.
    pub name: String,
}

/// Relation vocabulary derived from role pairs, with head-role clusters.
///
/// Relation types are qualified by event type internally; two event types sharing role names
/// produce distinct relation types with the same bare name. Clusters group by head role name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSchema {
    pub relation_types: Vec<RelationType>,
    pub head_cluster: Vec<usize>,
    pub cluster_names: Vec<String>,
}

impl RelationSchema {
    pub fn num_clusters(&self) -> usize {
        self.cluster_names.len()
    }

    pub fn len(&self) -> usize {
        self.relation_types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relation_types.is_empty()
    }

    pub fn find(&self, event_type: usize, head_role: usize, tail_role: usize) -> Option<usize> {
        self.relation_types.iter().position(|r| {
            r.event_type == event_type && r.head_role == head_role && r.tail_role == tail_role
        })
    }

    pub fn name(&self, relation: usize) -> &str {
        &self.relation_types[relation].name
    }

    /// Distinct bare relation names in first-appearance order.
    pub fn bare_names(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.relation_types {
            if !out.contains(&r.name) {
                out.push(r.name.clone());
            }
        }
        out
    }
}

/// Emits `ri2rj` for every role pair `i < j` of every event type, in pre-order.
pub fn derive_relation_schema(ontology: &EventOntology) -> RelationSchema {
    let mut relation_types = Vec::new();
    let mut head_cluster = Vec::new();
    let mut cluster_names: Vec<String> = Vec::new();
    for (ei, et) in ontology.event_types.iter().enumerate() {
        for i in 0..et.roles.len() {
            for j in i + 1..et.roles.len() {
                let head = &et.roles[i];
                let cluster = match cluster_names.iter().position(|c| c == head) {
                    Some(c) => c,
                    None => {
                        cluster_names.push(head.clone());
                        cluster_names.len() - 1
                    }
                };
                relation_types.push(RelationType {
                    event_type: ei,
                    head_role: i,
                    tail_role: j,
                    name: format!("{}2{}", head, et.roles[j]),
                });
                head_cluster.push(cluster);
            }
        }
    }
    RelationSchema {
        relation_types,
        head_cluster,
        cluster_names,
    }
}
