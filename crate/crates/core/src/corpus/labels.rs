//! Gold supervision derived from annotated documents: BIOES tags, relation triples,
//! event-type flags and EDAG path trees.

use std::collections::{BTreeMap, BTreeSet};

use crate::ontology::{
    AnnotatedDocument, EntityMention, EventOntology, EventRecord, RelationSchema, RelationTriple,
};

/// BIOES tag vocabulary: `O` is 0, then `B, I, E, S` for each entity type in ontology order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagSet {
    entity_types: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TagKind {
    Outside,
    Begin(usize),
    Inside(usize),
    End(usize),
    Single(usize),
}

impl TagSet {
    pub fn new(entity_types: &[String]) -> Self {
        TagSet {
            entity_types: entity_types.to_vec(),
        }
    }

    pub fn from_ontology(o: &EventOntology) -> Self {
        Self::new(&o.entity_types)
    }

    pub fn len(&self) -> usize {
        1 + 4 * self.entity_types.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn entity_types(&self) -> &[String] {
        &self.entity_types
    }

    pub fn encode(&self, kind: TagKind) -> usize {
        match kind {
            TagKind::Outside => 0,
            TagKind::Begin(t) => 1 + 4 * t,
            TagKind::Inside(t) => 2 + 4 * t,
            TagKind::End(t) => 3 + 4 * t,
            TagKind::Single(t) => 4 + 4 * t,
        }
    }

    pub fn decode(&self, tag: usize) -> TagKind {
        if tag == 0 {
            return TagKind::Outside;
        }
        let t = (tag - 1) / 4;
        match (tag - 1) % 4 {
            0 => TagKind::Begin(t),
            1 => TagKind::Inside(t),
            2 => TagKind::End(t),
            _ => TagKind::Single(t),
        }
    }

    pub fn name(&self, tag: usize) -> String {
        match self.decode(tag) {
            TagKind::Outside => "O".into(),
            TagKind::Begin(t) => format!("B-{}", self.entity_types[t]),
            TagKind::Inside(t) => format!("I-{}", self.entity_types[t]),
            TagKind::End(t) => format!("E-{}", self.entity_types[t]),
            TagKind::Single(t) => format!("S-{}", self.entity_types[t]),
        }
    }
}

/// A typed span `[start, end)` recovered from a tag sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaggedSpan {
    pub start: usize,
    pub end: usize,
    pub entity_type: usize,
}

/// Drops overlapping mentions: longer spans win, ties go to the earlier start.
pub fn resolve_overlaps(mentions: &[EntityMention]) -> Vec<EntityMention> {
    let mut order: Vec<&EntityMention> = mentions.iter().collect();
    order.sort_by_key(|m| (std::cmp::Reverse(m.len()), m.sentence, m.start, m.entity));
    let mut kept: Vec<EntityMention> = Vec::new();
    for m in order {
        if !kept.iter().any(|k| k.overlaps(m)) {
            kept.push(*m);
        }
    }
    kept.sort_by_key(|m| (m.sentence, m.start, m.end, m.entity));
    kept
}

/// Per-sentence BIOES tag sequences plus the (overlap-resolved) mentions they encode.
pub fn derive_bioes_tags(
    doc: &AnnotatedDocument,
    tags: &TagSet,
) -> (Vec<Vec<usize>>, Vec<EntityMention>) {
    let mentions = resolve_overlaps(&doc.mentions());
    let mut out: Vec<Vec<usize>> = doc
        .document
        .sentences
        .iter()
        .map(|s| vec![0; s.len()])
        .collect();
    for m in &mentions {
        let ty = tags
            .entity_types
            .iter()
            .position(|t| *t == doc.entities[m.entity].entity_type)
            .expect("entity type validated at ingestion");
        let row = &mut out[m.sentence];
        if m.len() == 1 {
            row[m.start] = tags.encode(TagKind::Single(ty));
        } else {
            row[m.start] = tags.encode(TagKind::Begin(ty));
            for t in &mut row[m.start + 1..m.end - 1] {
                *t = tags.encode(TagKind::Inside(ty));
            }
            row[m.end - 1] = tags.encode(TagKind::End(ty));
        }
    }
    (out, mentions)
}

/// Strict BIOES decoding; malformed fragments produce no span.
pub fn decode_bioes(seq: &[usize], tags: &TagSet) -> Vec<TaggedSpan> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    for (i, &t) in seq.iter().enumerate() {
        match tags.decode(t) {
            TagKind::Outside => open = None,
            TagKind::Single(ty) => {
                open = None;
                spans.push(TaggedSpan {
                    start: i,
                    end: i + 1,
                    entity_type: ty,
                });
            }
            TagKind::Begin(ty) => open = Some((i, ty)),
            TagKind::Inside(ty) => {
                if !matches!(open, Some((_, o)) if o == ty) {
                    open = None;
                }
            }
            TagKind::End(ty) => {
                if let Some((s, o)) = open {
                    if o == ty {
                        spans.push(TaggedSpan {
                            start: s,
                            end: i + 1,
                            entity_type: ty,
                        });
                    }
                }
                open = None;
            }
        }
    }
    spans
}

/// Role-pair relation triples for every pair of filled roles `i < j`, deduplicated.
pub fn derive_gold_relations(
    records: &[EventRecord],
    schema: &RelationSchema,
) -> BTreeSet<RelationTriple> {
    records
        .iter()
        .flat_map(|r| record_relations(r, schema))
        .collect()
}

/// Triples of a single record, before deduplication; `C(n, 2)` of them for `n` filled roles.
pub fn record_relations(record: &EventRecord, schema: &RelationSchema) -> Vec<RelationTriple> {
    let filled: Vec<(usize, usize)> = record.filled().collect();
    let mut out = Vec::with_capacity(filled.len() * filled.len().saturating_sub(1) / 2);
    for (a, &(ri, ei)) in filled.iter().enumerate() {
        for &(rj, ej) in &filled[a + 1..] {
            let relation = schema
                .find(record.event_type, ri, rj)
                .expect("schema derived from the same ontology");
            out.push(RelationTriple {
                head: ei,
                tail: ej,
                relation,
            });
        }
    }
    out
}

/// Single-label classifier targets per ordered entity pair: when a pair carries several
/// relations, the lexicographically smallest bare name wins (then the lower relation index).
pub fn single_label_targets(
    triples: &BTreeSet<RelationTriple>,
    schema: &RelationSchema,
) -> BTreeMap<(usize, usize), usize> {
    let mut out: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for t in triples {
        out.entry((t.head, t.tail))
            .and_modify(|cur| {
                let key_new = (schema.name(t.relation), t.relation);
                let key_cur = (schema.name(*cur), *cur);
                if key_new < key_cur {
                    *cur = t.relation;
                }
            })
            .or_insert(t.relation);
    }
    out
}

pub fn event_type_flags(records: &[EventRecord], num_event_types: usize) -> Vec<bool> {
    let mut flags = vec![false; num_event_types];
    for r in records {
        flags[r.event_type] = true;
    }
    flags
}

/// One EDAG step key: an entity index or the NONE argument.
pub type Arg = Option<usize>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PathNode {
    pub children: Vec<(Arg, PathNode)>,
}

/// Prefix tree over role-ordered argument paths of one event type.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdagTree {
    pub event_type: usize,
    pub num_roles: usize,
    pub root: PathNode,
}

impl EdagTree {
    pub fn new(event_type: usize, num_roles: usize) -> Self {
        EdagTree {
            event_type,
            num_roles,
            root: PathNode::default(),
        }
    }

    pub fn insert(&mut self, args: &[Arg]) {
        debug_assert_eq!(args.len(), self.num_roles);
        let mut node = &mut self.root;
        for a in args {
            let pos = match node.children.iter().position(|(k, _)| k == a) {
                Some(p) => p,
                None => {
                    node.children.push((*a, PathNode::default()));
                    node.children.len() - 1
                }
            };
            node = &mut node.children[pos].1;
        }
    }

    pub fn from_records(event_type: usize, num_roles: usize, records: &[EventRecord]) -> Self {
        let mut t = EdagTree::new(event_type, num_roles);
        for r in records.iter().filter(|r| r.event_type == event_type) {
            t.insert(&r.args);
        }
        t
    }

    /// Root-to-leaf argument paths in insertion order.
    pub fn paths(&self) -> Vec<Vec<Arg>> {
        fn walk(n: &PathNode, prefix: &mut Vec<Arg>, out: &mut Vec<Vec<Arg>>, depth: usize) {
            if prefix.len() == depth {
                out.push(prefix.clone());
                return;
            }
            for (a, c) in &n.children {
                prefix.push(*a);
                walk(c, prefix, out, depth);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        if !self.root.children.is_empty() {
            walk(&self.root, &mut Vec::new(), &mut out, self.num_roles);
        }
        out
    }

    pub fn leaf_count(&self) -> usize {
        self.paths().len()
    }

    /// Children of the node reached by `prefix`, or `None` when the prefix leaves the tree.
    pub fn children(&self, prefix: &[Arg]) -> Option<Vec<Arg>> {
        let mut node = &self.root;
        for a in prefix {
            node = &node.children.iter().find(|(k, _)| k == a)?.1;
        }
        Some(node.children.iter().map(|(k, _)| *k).collect())
    }

    /// Every internal node as `(prefix, children)`, depth-first.
    pub fn steps(&self) -> Vec<(Vec<Arg>, Vec<Arg>)> {
        fn walk(
            n: &PathNode,
            prefix: &mut Vec<Arg>,
            out: &mut Vec<(Vec<Arg>, Vec<Arg>)>,
            depth: usize,
        ) {
            if prefix.len() == depth {
                return;
            }
            out.push((prefix.clone(), n.children.iter().map(|(k, _)| *k).collect()));
            for (a, c) in &n.children {
                prefix.push(*a);
                walk(c, prefix, out, depth);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        if !self.root.children.is_empty() {
            walk(&self.root, &mut Vec::new(), &mut out, self.num_roles);
        }
        out
    }
}

/// One path tree per triggered event type, in event-type order.
pub fn derive_edag_paths(records: &[EventRecord], ontology: &EventOntology) -> Vec<EdagTree> {
    let flags = event_type_flags(records, ontology.event_types.len());
    flags
        .iter()
        .enumerate()
        .filter(|(_, &f)| f)
        .map(|(et, _)| EdagTree::from_records(et, ontology.event_types[et].roles.len(), records))
        .collect()
}

/// All supervision signals for one document.
#[derive(Clone, Debug, PartialEq)]
pub struct GoldLabels {
    pub tags: Vec<Vec<usize>>,
    pub mentions: Vec<EntityMention>,
    pub relation_triples: BTreeSet<RelationTriple>,
    pub event_type_flags: Vec<bool>,
    pub edag_paths: Vec<EdagTree>,
}

impl GoldLabels {
    pub fn derive(
        doc: &AnnotatedDocument,
        ontology: &EventOntology,
        schema: &RelationSchema,
        tags: &TagSet,
    ) -> Self {
        let (tag_seqs, mentions) = derive_bioes_tags(doc, tags);
        GoldLabels {
            tags: tag_seqs,
            mentions,
            relation_triples: derive_gold_relations(&doc.records, schema),
            event_type_flags: event_type_flags(&doc.records, ontology.event_types.len()),
            edag_paths: derive_edag_paths(&doc.records, ontology),
        }
    }

    pub fn edag_for(&self, event_type: usize) -> Option<&EdagTree> {
        self.edag_paths.iter().find(|t| t.event_type == event_type)
    }
}
