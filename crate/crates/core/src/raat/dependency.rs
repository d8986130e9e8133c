//! Dependency tensor construction over entity and sentence nodes.

use std::fmt::Write as _;

use crate::neural::Tensor;
use crate::ontology::{EntityMention, RelationSchema, RelationTriple};
use crate::{Error, Result, Scalar};

pub const NA: usize = 0;
pub const CO_REFERENCE: usize = 1;
pub const CO_EXISTENCE: usize = 2;
/// First Co-relation channel; cluster `h` lives at `CO_RELATION + h`.
pub const CO_RELATION: usize = 3;

/// A row of the encoder input.
///
/// Entity nodes cover mention rows (one sentence), pooled entity rows (every sentence the
/// entity occurs in) and the NONE argument (`entity: None`, no sentences).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Node {
    Entity {
        entity: Option<usize>,
        sentences: Vec<usize>,
    },
    Sentence(usize),
}

impl Node {
    pub fn mention(m: &EntityMention) -> Self {
        Node::Entity {
            entity: Some(m.entity),
            sentences: vec![m.sentence],
        }
    }

    pub fn entity(&self) -> Option<usize> {
        match self {
            Node::Entity { entity, .. } => *entity,
            Node::Sentence(_) => None,
        }
    }
}

/// Mention nodes in the given order followed by one node per sentence.
pub fn document_nodes(mentions: &[EntityMention], num_sentences: usize) -> Vec<Node> {
    mentions
        .iter()
        .map(Node::mention)
        .chain((0..num_sentences).map(Node::Sentence))
        .collect()
}

/// Binary `(3 + H) × n × n` tensor, stored channel-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DependencyTensor {
    channels: usize,
    n: usize,
    data: Vec<u8>,
}

impl DependencyTensor {
    pub fn new(channels: usize, n: usize) -> Self {
        DependencyTensor {
            channels,
            n,
            data: vec![0; channels * n * n],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn get(&self, c: usize, i: usize, j: usize) -> bool {
        self.data[(c * self.n + i) * self.n + j] != 0
    }

    pub fn set(&mut self, c: usize, i: usize, j: usize) {
        self.data[(c * self.n + i) * self.n + j] = 1;
    }

    fn clear(&mut self, c: usize, i: usize, j: usize) {
        self.data[(c * self.n + i) * self.n + j] = 0;
    }

    pub fn channel_is_empty(&self, c: usize) -> bool {
        let len = self.n * self.n;
        self.data[c * len..(c + 1) * len].iter().all(|&v| v == 0)
    }

    /// Channel `c` as a 0/1 matrix.
    pub fn channel<S: Scalar>(&self, c: usize) -> Tensor<S> {
        let len = self.n * self.n;
        let data = self.data[c * len..(c + 1) * len]
            .iter()
            .map(|&v| if v != 0 { S::one() } else { S::zero() })
            .collect();
        Tensor::matrix(self.n, self.n, data)
    }

    /// Clears channel `c` and recomputes NA.
    pub fn zero_channel(&mut self, c: usize) {
        for i in 0..self.n {
            for j in 0..self.n {
                self.clear(c, i, j);
            }
        }
        self.fill_na();
    }

    fn fill_na(&mut self) {
        for i in 0..self.n {
            for j in 0..self.n {
                let any = (1..self.channels).any(|c| self.get(c, i, j));
                if any {
                    self.clear(NA, i, j);
                } else {
                    self.set(NA, i, j);
                }
            }
        }
    }

    /// Set entries as `(channel, i, j)` in lexicographic order.
    pub fn sparse_triples(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for c in 0..self.channels {
            for i in 0..self.n {
                for j in 0..self.n {
                    if self.get(c, i, j) {
                        out.push((c, i, j));
                    }
                }
            }
        }
        out
    }

    /// One `channel-name i j` line per set entry.
    pub fn debug_dump(&self) -> String {
        let mut s = String::new();
        for (c, i, j) in self.sparse_triples() {
            let _ = writeln!(s, "{}\t{i}\t{j}", channel_name(c));
        }
        s
    }

    /// Applies a node permutation: node `k` of the result is node `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = DependencyTensor::new(self.channels, self.n);
        for c in 0..self.channels {
            for i in 0..self.n {
                for j in 0..self.n {
                    if self.get(c, perm[i], perm[j]) {
                        out.set(c, i, j);
                    }
                }
            }
        }
        out
    }
}

pub fn channel_name(c: usize) -> String {
    match c {
        NA => "NA".into(),
        CO_REFERENCE => "Co-reference".into(),
        CO_EXISTENCE => "Co-existence".into(),
        h => format!("Co-relation[{}]", h - CO_RELATION),
    }
}

pub fn channel_count(schema: &RelationSchema) -> usize {
    CO_RELATION + schema.num_clusters()
}

/// Builds the dependency tensor for `nodes`.
///
/// Entity-level triples are broadcast to every (head node, tail node) pair. With `mirror`, each
/// Co-relation entry is also set tail→head.
pub fn build_dependency_tensor(
    nodes: &[Node],
    triples: &[RelationTriple],
    schema: &RelationSchema,
    num_entities: usize,
    mirror: bool,
) -> Result<DependencyTensor> {
    for n in nodes {
        if let Some(e) = n.entity() {
            if e >= num_entities {
                return Err(Error::UnknownEntity {
                    entity: e,
                    count: num_entities,
                });
            }
        }
    }
    for t in triples {
        for e in [t.head, t.tail] {
            if e >= num_entities {
                return Err(Error::UnknownEntity {
                    entity: e,
                    count: num_entities,
                });
            }
        }
        if t.relation >= schema.len() {
            return Err(Error::shape(
                "dependency tensor",
                format!("relation {} outside schema of {}", t.relation, schema.len()),
            ));
        }
    }
    let n = nodes.len();
    let mut tensor = DependencyTensor::new(channel_count(schema), n);
    let mut by_entity: Vec<Vec<usize>> = vec![Vec::new(); num_entities];
    for (i, node) in nodes.iter().enumerate() {
        if let Some(e) = node.entity() {
            by_entity[e].push(i);
        }
    }
    for rows in &by_entity {
        for &a in rows {
            for &b in rows {
                if a != b {
                    tensor.set(CO_REFERENCE, a, b);
                }
            }
        }
    }
    for (i, node) in nodes.iter().enumerate() {
        if let Node::Entity { sentences, .. } = node {
            for (j, other) in nodes.iter().enumerate() {
                if let Node::Sentence(s) = other {
                    if sentences.contains(s) {
                        tensor.set(CO_EXISTENCE, i, j);
                        tensor.set(CO_EXISTENCE, j, i);
                    }
                }
            }
        }
    }
    for t in triples {
        let c = CO_RELATION + schema.head_cluster[t.relation];
        for &a in &by_entity[t.head] {
            for &b in &by_entity[t.tail] {
                if a != b {
                    tensor.set(c, a, b);
                    if mirror {
                        tensor.set(c, b, a);
                    }
                }
            }
        }
    }
    tensor.fill_na();
    Ok(tensor)
}

/// Lists invariant violations: NA exclusivity, symmetry, sentence pairs NA-only, and
/// Co-relation only between entity nodes.
pub fn check_invariants(t: &DependencyTensor, nodes: &[Node]) -> Vec<String> {
    let mut v = Vec::new();
    let n = t.nodes();
    for i in 0..n {
        for j in 0..n {
            let others = (1..t.channels()).any(|c| t.get(c, i, j));
            if t.get(NA, i, j) == others {
                v.push(format!("NA exclusivity fails at ({i},{j})"));
            }
            for c in [CO_REFERENCE, CO_EXISTENCE] {
                if t.get(c, i, j) != t.get(c, j, i) {
                    v.push(format!("{} asymmetric at ({i},{j})", channel_name(c)));
                }
            }
            let both_sent =
                matches!(nodes[i], Node::Sentence(_)) && matches!(nodes[j], Node::Sentence(_));
            if both_sent && others {
                v.push(format!("sentence pair ({i},{j}) carries a non-NA channel"));
            }
            if i == j && others {
                v.push(format!("diagonal ({i},{i}) carries a non-NA channel"));
            }
            for c in CO_RELATION..t.channels() {
                if t.get(c, i, j) && (nodes[i].entity().is_none() || nodes[j].entity().is_none()) {
                    v.push(format!(
                        "{} touches a non-entity node at ({i},{j})",
                        channel_name(c)
                    ));
                }
            }
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::RelationType;

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

    fn m(entity: usize, sentence: usize) -> EntityMention {
        EntityMention {
            sentence,
            start: 0,
            end: 1,
            entity,
        }
    }

    #[test]
    fn five_node_fixture() {
        // Nodes: a1 (A in s0), a2 (A in s1), b1 (B in s1), s0, s1.
        let nodes = document_nodes(&[m(0, 0), m(0, 1), m(1, 1)], 2);
        let triple = RelationTriple {
            head: 0,
            tail: 1,
            relation: 0,
        };
        let t =
            build_dependency_tensor(&nodes, &[triple], &one_cluster_schema(), 2, false).unwrap();
        assert_eq!(t.channels(), 4);
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
        assert_eq!(t.sparse_triples(), expected);
        assert!(check_invariants(&t, &nodes).is_empty());
    }

    #[test]
    fn single_mention_without_triples() {
        let nodes = document_nodes(&[m(0, 0)], 1);
        let t = build_dependency_tensor(&nodes, &[], &one_cluster_schema(), 1, false).unwrap();
        assert!(t.channel_is_empty(CO_REFERENCE));
        assert!(t.channel_is_empty(CO_RELATION));
        assert!(!t.channel_is_empty(CO_EXISTENCE));
        assert!(t.get(NA, 0, 0) && t.get(NA, 1, 1));
    }

    #[test]
    fn self_relation_sets_relation_and_reference() {
        let nodes = document_nodes(&[m(0, 0), m(0, 1)], 2);
        let triple = RelationTriple {
            head: 0,
            tail: 0,
            relation: 0,
        };
        let t =
            build_dependency_tensor(&nodes, &[triple], &one_cluster_schema(), 1, false).unwrap();
        for (i, j) in [(0, 1), (1, 0)] {
            assert!(t.get(CO_RELATION, i, j) && t.get(CO_REFERENCE, i, j));
            assert!(!t.get(NA, i, j));
        }
        assert!(!t.get(CO_RELATION, 0, 0));
        assert!(check_invariants(&t, &nodes).is_empty());
    }

    #[test]
    fn unknown_entity_is_an_error() {
        let nodes = document_nodes(&[m(0, 0)], 1);
        let triple = RelationTriple {
            head: 0,
            tail: 4,
            relation: 0,
        };
        assert!(matches!(
            build_dependency_tensor(&nodes, &[triple], &one_cluster_schema(), 1, false),
            Err(Error::UnknownEntity { entity: 4, .. })
        ));
    }

    #[test]
    fn mirror_sets_both_directions() {
        let nodes = document_nodes(&[m(0, 0), m(1, 0)], 1);
        let triple = RelationTriple {
            head: 0,
            tail: 1,
            relation: 0,
        };
        let s = one_cluster_schema();
        let plain = build_dependency_tensor(&nodes, &[triple], &s, 2, false).unwrap();
        assert!(plain.get(CO_RELATION, 0, 1) && !plain.get(CO_RELATION, 1, 0));
        let mirrored = build_dependency_tensor(&nodes, &[triple], &s, 2, true).unwrap();
        assert!(mirrored.get(CO_RELATION, 1, 0));
    }

    #[test]
    fn debug_dump_lists_channel_names() {
        let nodes = document_nodes(&[m(0, 0)], 1);
        let t = build_dependency_tensor(&nodes, &[], &one_cluster_schema(), 1, false).unwrap();
        let dump = t.debug_dump();
        assert!(dump.contains("Co-existence\t0\t1"));
        assert!(dump.contains("NA\t0\t0"));
    }
}
