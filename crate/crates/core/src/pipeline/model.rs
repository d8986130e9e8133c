//! Parameters and forward passes of the four stages.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, StageLosses};
use super::edag::{decode_event_type, StepScorer};
use super::vocab::{Vocab, UNK};
use crate::corpus::labels::{decode_bioes, single_label_targets, Arg, GoldLabels, TagSet};
use crate::eval::SurfaceRecord;
use crate::neural::crf::viterbi;
use crate::neural::layers::{Dropout, Linear, TransformerEncoder};
use crate::neural::ops::{argmax, sigmoid};
use crate::neural::{Gradients, Graph, ParamId, ParamStore, Tensor, Var};
use crate::ontology::{
    derive_relation_schema, AnnotatedDocument, EntityMention, EventOntology, EventRecord,
    RelationSchema, RelationTriple,
};
use crate::raat::{
    build_dependency_tensor, channel_count, document_nodes, DependencyTensor, Node, RaatEncoder,
};
use crate::{Error, Result};

#[derive(Clone, Debug)]
struct Params {
    token_embedding: ParamId,
    position_embedding: ParamId,
    sentence_embedding: ParamId,
    /// One row per entity type plus a final row marking sentence nodes.
    kind_embedding: ParamId,
    eer: TransformerEncoder,
    emission: Linear,
    transitions: ParamId,
    dre: TransformerEncoder,
    biaffine: ParamId,
    raat1: RaatEncoder,
    type_head: Linear,
    raat2: RaatEncoder,
    role_embedding: ParamId,
    none_embedding: ParamId,
    role_heads: Vec<Linear>,
}

/// Entities of one document as seen by the pipeline: gold entities while training,
/// surface-grouped predicted spans at inference.
#[derive(Clone, Debug, PartialEq)]
pub struct DocEntities {
    /// Mentions sorted by position; `entity` indexes `types`.
    pub mentions: Vec<EntityMention>,
    pub types: Vec<String>,
    /// Normalized surface per entity.
    pub surfaces: Vec<String>,
}

impl DocEntities {
    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    /// Node rows of each entity's mentions.
    pub fn mention_rows(&self) -> Vec<Vec<usize>> {
        let mut rows = vec![Vec::new(); self.len()];
        for (i, m) in self.mentions.iter().enumerate() {
            rows[m.entity].push(i);
        }
        rows
    }

    pub fn sentences(&self) -> Vec<Vec<usize>> {
        let mut s: Vec<Vec<usize>> = vec![Vec::new(); self.len()];
        for m in &self.mentions {
            if !s[m.entity].contains(&m.sentence) {
                s[m.entity].push(m.sentence);
            }
        }
        s
    }
}

/// Token ids and gold supervision of one training document.
#[derive(Clone, Debug)]
pub struct PreparedDoc {
    pub token_ids: Vec<Vec<usize>>,
    pub gold: GoldLabels,
    pub entities: DocEntities,
}

/// What the inference chain produced for one document.
#[derive(Clone, Debug, PartialEq)]
pub struct DocumentPrediction {
    pub doc_id: String,
    pub entities: DocEntities,
    pub triples: Vec<RelationTriple>,
    pub triggered: Vec<bool>,
    pub records: Vec<EventRecord>,
    pub surface_records: Vec<SurfaceRecord>,
}

/// Per-document training quantities.
pub struct DocLoss {
    pub losses: StageLosses,
    pub total: f64,
    pub grads: Gradients<f64>,
}

/// The full model: configuration, vocabularies and parameters.
pub struct ReDee {
    pub config: ModelConfig,
    pub ontology: EventOntology,
    pub schema: RelationSchema,
    pub tags: TagSet,
    pub vocab: Vocab,
    pub store: ParamStore<f64>,
    params: Params,
    role_offset: Vec<usize>,
    tensor_builds: AtomicUsize,
}

/// Node embeddings and the intermediate values shared by the later stages.
struct Encoded {
    /// Mention rows then sentence rows, each plus sentence-position and node-kind embeddings.
    nodes: Var,
    num_mentions: usize,
    num_sentences: usize,
}

/// Inputs of an EDAG step that do not depend on the path.
struct ErgContext {
    entity_rows: Vec<Option<Var>>,
    sentences: Var,
    num_sentences: usize,
    entity_sentences: Vec<Vec<usize>>,
    entity_types: Vec<String>,
    triples: Vec<RelationTriple>,
    role_embedding: Var,
    none_embedding: Var,
}

impl ReDee {
    pub fn new(
        config: ModelConfig,
        ontology: EventOntology,
        vocab: Vocab,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let schema = derive_relation_schema(&ontology);
        let tags = TagSet::from_ontology(&ontology);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.hidden;
        let dims = config.dims();
        let k = tags.len();
        let channels = channel_count(&schema);
        let token_embedding =
            store.add_uniform("eer.token_embedding", &[vocab.len().max(1), d], &mut rng)?;
        let position_embedding = store.add_uniform(
            "eer.position_embedding",
            &[config.max_sentence_len, d],
            &mut rng,
        )?;
        let sentence_embedding = store.add_uniform(
            "eer.sentence_embedding",
            &[config.max_sentences, d],
            &mut rng,
        )?;
        let kind_embedding = store.add_uniform(
            "eer.kind_embedding",
            &[ontology.entity_types.len() + 1, d],
            &mut rng,
        )?;
        let eer =
            TransformerEncoder::new(&mut store, "eer.encoder", config.eer_layers, dims, &mut rng)?;
        let emission = Linear::new(&mut store, "eer.emission", d, k, true, &mut rng)?;
        let transitions = store.add_zeros("crf.transitions", &[k + 2, k + 2])?;
        let dre =
            TransformerEncoder::new(&mut store, "dre.encoder", config.dre_layers, dims, &mut rng)?;
        let biaffine = store.add_uniform("dre.biaffine", &[d, 1 + schema.len(), d], &mut rng)?;
        let raat1 = RaatEncoder::new(
            &mut store,
            "ese.raat1",
            config.raat1_layers,
            dims,
            channels,
            &mut rng,
        )?;
        let type_head = Linear::new(
            &mut store,
            "cls.type_head",
            d,
            ontology.event_types.len(),
            true,
            &mut rng,
        )?;
        let raat2 = RaatEncoder::new(
            &mut store,
            "erg.raat2",
            config.raat2_layers,
            dims,
            channels,
            &mut rng,
        )?;
        let mut role_offset = Vec::with_capacity(ontology.event_types.len());
        let mut total_roles = 0;
        for et in &ontology.event_types {
            role_offset.push(total_roles);
            total_roles += et.roles.len();
        }
        let role_embedding =
            store.add_uniform("erg.role_embedding", &[total_roles.max(1), d], &mut rng)?;
        let none_embedding = store.add_uniform("erg.none_embedding", &[1, d], &mut rng)?;
        let mut role_heads = Vec::with_capacity(total_roles);
        for (ei, et) in ontology.event_types.iter().enumerate() {
            for r in 0..et.roles.len() {
                role_heads.push(Linear::new(
                    &mut store,
                    &format!("erg.role_head.{ei}.{r}"),
                    d,
                    1,
                    true,
                    &mut rng,
                )?);
            }
        }
        Ok(ReDee {
            config,
            ontology,
            schema,
            tags,
            vocab,
            store,
            params: Params {
                token_embedding,
                position_embedding,
                sentence_embedding,
                kind_embedding,
                eer,
                emission,
                transitions,
                dre,
                biaffine,
                raat1,
                type_head,
                raat2,
                role_embedding,
                none_embedding,
                role_heads,
            },
            role_offset,
            tensor_builds: AtomicUsize::new(0),
        })
    }

    /// Number of dependency tensors built since construction.
    pub fn tensor_builds(&self) -> usize {
        self.tensor_builds.load(Ordering::Relaxed)
    }

    /// Parameter ids grouped by component (name up to the second dot).
    pub fn param_groups(&self) -> Vec<(String, Vec<ParamId>)> {
        let mut groups: Vec<(String, Vec<ParamId>)> = Vec::new();
        for id in self.store.ids() {
            let name = self.store.name(id);
            let key: String = name.split('.').take(2).collect::<Vec<_>>().join(".");
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => v.push(id),
                None => groups.push((key, vec![id])),
            }
        }
        groups
    }

    pub fn token_ids(&self, doc: &AnnotatedDocument) -> Vec<Vec<usize>> {
        doc.document
            .sentences
            .iter()
            .map(|s| {
                if s.is_empty() {
                    vec![UNK]
                } else {
                    s.iter().map(|t| self.vocab.id(t)).collect()
                }
            })
            .collect()
    }

    pub fn prepare(&self, doc: &AnnotatedDocument) -> PreparedDoc {
        let mut gold = GoldLabels::derive(doc, &self.ontology, &self.schema, &self.tags);
        for (s, t) in gold.tags.iter_mut().enumerate() {
            if doc.document.sentences[s].is_empty() {
                *t = vec![0];
            }
        }
        let entities = DocEntities {
            mentions: gold.mentions.clone(),
            types: doc.entities.iter().map(|e| e.entity_type.clone()).collect(),
            surfaces: (0..doc.entities.len())
                .map(|e| doc.entity_surface(e, self.config.tokenization))
                .collect(),
        };
        PreparedDoc {
            token_ids: self.token_ids(doc),
            gold,
            entities,
        }
    }

    fn build_tensor(
        &self,
        nodes: &[Node],
        triples: &[RelationTriple],
        num_entities: usize,
    ) -> Result<DependencyTensor> {
        self.tensor_builds.fetch_add(1, Ordering::Relaxed);
        build_dependency_tensor(
            nodes,
            triples,
            &self.schema,
            num_entities,
            self.config.mirror_corelation,
        )
    }

    /// Token encoder; returns per-token states and the row indices of each sentence.
    fn encode_tokens(
        &self,
        g: &mut Graph<'_, f64>,
        token_ids: &[Vec<usize>],
        drop: &mut Option<Dropout<'_>>,
    ) -> Result<(Var, Vec<Vec<usize>>)> {
        let mut ids = Vec::new();
        let mut positions = Vec::new();
        let mut sentence_rows = Vec::with_capacity(token_ids.len());
        for s in token_ids {
            let start = ids.len();
            for (p, &t) in s.iter().enumerate() {
                ids.push(t);
                positions.push(p.min(self.config.max_sentence_len - 1));
            }
            sentence_rows.push((start..ids.len()).collect::<Vec<_>>());
        }
        let n = ids.len();
        let tok = g.param(self.params.token_embedding);
        let tok = g.gather_rows(tok, &ids)?;
        let pos = g.param(self.params.position_embedding);
        let pos = g.gather_rows(pos, &positions)?;
        let x = g.add(tok, pos)?;
        let mask = if sentence_rows.len() > 1 {
            let mut m = Tensor::filled(&[n, n], -1e9);
            for rows in &sentence_rows {
                for &i in rows {
                    for &j in rows {
                        m.set(i, j, 0.0);
                    }
                }
            }
            Some(m)
        } else {
            None
        };
        let h = self.params.eer.forward(g, x, mask.as_ref(), drop)?;
        Ok((h, sentence_rows))
    }

    fn encode_nodes(
        &self,
        g: &mut Graph<'_, f64>,
        tokens: Var,
        sentence_rows: &[Vec<usize>],
        entities: &DocEntities,
    ) -> Result<Encoded> {
        let mentions = &entities.mentions;
        let mut rows = Vec::with_capacity(mentions.len() + sentence_rows.len());
        for m in mentions {
            let r: Vec<usize> = (m.start..m.end)
                .map(|i| sentence_rows[m.sentence][i])
                .collect();
            rows.push(g.max_pool(tokens, &r)?);
        }
        for r in sentence_rows {
            rows.push(g.max_pool(tokens, r)?);
        }
        let pooled = g.concat_rows(&rows)?;
        let last = self.config.max_sentences - 1;
        let positions: Vec<usize> = mentions
            .iter()
            .map(|m| m.sentence.min(last))
            .chain((0..sentence_rows.len()).map(|s| s.min(last)))
            .collect();
        let table = g.param(self.params.sentence_embedding);
        let pos = g.gather_rows(table, &positions)?;
        let nodes = g.add(pooled, pos)?;
        let sentence_kind = self.ontology.entity_types.len();
        let kinds: Vec<usize> = mentions
            .iter()
            .map(|m| {
                self.ontology
                    .entity_type_index(&entities.types[m.entity])
                    .unwrap_or(sentence_kind)
            })
            .chain(std::iter::repeat_n(sentence_kind, sentence_rows.len()))
            .collect();
        let table = g.param(self.params.kind_embedding);
        let kind = g.gather_rows(table, &kinds)?;
        let nodes = g.add(nodes, kind)?;
        Ok(Encoded {
            num_mentions: mentions.len(),
            num_sentences: sentence_rows.len(),
            nodes,
        })
    }

    /// Entity rows (max over mention rows of `x`) for entities with at least one mention.
    fn entity_rows(
        &self,
        g: &mut Graph<'_, f64>,
        x: Var,
        entities: &DocEntities,
    ) -> Result<Vec<Option<Var>>> {
        entities
            .mention_rows()
            .iter()
            .map(|rows| {
                if rows.is_empty() {
                    Ok(None)
                } else {
                    g.max_pool(x, rows).map(Some)
                }
            })
            .collect()
    }

    /// Entity rows of the relation encoder.
    fn relation_entities(
        &self,
        g: &mut Graph<'_, f64>,
        enc: &Encoded,
        entities: &DocEntities,
        drop: &mut Option<Dropout<'_>>,
    ) -> Result<Vec<Option<Var>>> {
        if enc.num_mentions == 0 {
            return Ok(vec![None; entities.len()]);
        }
        let z = self.params.dre.forward(g, enc.nodes, None, drop)?;
        self.entity_rows(g, z, entities)
    }

    /// Biaffine logits (`P × classes`) for entity pairs.
    fn pair_logits(
        &self,
        g: &mut Graph<'_, f64>,
        ents: &[Option<Var>],
        pairs: &[(usize, usize)],
    ) -> Result<Var> {
        let heads: Vec<Var> = pairs
            .iter()
            .map(|&(h, _)| ents[h].expect("entity row"))
            .collect();
        let tails: Vec<Var> = pairs
            .iter()
            .map(|&(_, t)| ents[t].expect("entity row"))
            .collect();
        let h = g.concat_rows(&heads)?;
        let t = g.concat_rows(&tails)?;
        let w = g.param(self.params.biaffine);
        g.biaffine(h, t, w)
    }

    /// All ordered pairs of entities that have mentions, including self-pairs.
    fn candidate_pairs(ents: &[Option<Var>]) -> Vec<(usize, usize)> {
        let live: Vec<usize> = (0..ents.len()).filter(|&e| ents[e].is_some()).collect();
        let mut pairs = Vec::with_capacity(live.len() * live.len());
        for &h in &live {
            for &t in &live {
                pairs.push((h, t));
            }
        }
        pairs
    }

    fn predict_triples(
        &self,
        g: &Graph<'_, f64>,
        logits: Var,
        pairs: &[(usize, usize)],
    ) -> Vec<RelationTriple> {
        let v = g.value(logits);
        let mut out = Vec::new();
        for (p, &(head, tail)) in pairs.iter().enumerate() {
            let c = argmax(v.row(p));
            if c != 0 {
                out.push(RelationTriple {
                    head,
                    tail,
                    relation: c - 1,
                });
            }
        }
        out
    }

    fn encode_relations(
        &self,
        g: &mut Graph<'_, f64>,
        enc: &Encoded,
        entities: &DocEntities,
        triples: &[RelationTriple],
        drop: &mut Option<Dropout<'_>>,
    ) -> Result<Var> {
        let t = if self.config.disable_raat1 {
            None
        } else {
            let nodes = document_nodes(&entities.mentions, enc.num_sentences);
            Some(self.build_tensor(&nodes, triples, entities.len())?)
        };
        self.params.raat1.forward(g, enc.nodes, t.as_ref(), drop)
    }

    fn type_logits(&self, g: &mut Graph<'_, f64>, enriched: Var, enc: &Encoded) -> Result<Var> {
        let rows: Vec<usize> = (enc.num_mentions..enc.num_mentions + enc.num_sentences).collect();
        let pooled = g.max_pool(enriched, &rows)?;
        self.params.type_head.forward(g, pooled)
    }

    fn erg_context(
        &self,
        g: &mut Graph<'_, f64>,
        enriched: Var,
        enc: &Encoded,
        entities: &DocEntities,
        triples: Vec<RelationTriple>,
    ) -> Result<ErgContext> {
        let sentence_rows: Vec<usize> =
            (enc.num_mentions..enc.num_mentions + enc.num_sentences).collect();
        let sentences = g.gather_rows(enriched, &sentence_rows)?;
        Ok(ErgContext {
            entity_rows: self.entity_rows(g, enriched, entities)?,
            sentences,
            num_sentences: enc.num_sentences,
            entity_sentences: entities.sentences(),
            entity_types: entities.types.clone(),
            triples,
            role_embedding: g.param(self.params.role_embedding),
            none_embedding: g.param(self.params.none_embedding),
        })
    }

    /// Candidate options for a role: type-compatible entities with mentions, then NONE.
    fn role_options(&self, ctx: &ErgContext, event_type: usize, role: usize) -> Vec<Arg> {
        let def = &self.ontology.event_types[event_type];
        (0..ctx.entity_rows.len())
            .filter(|&e| {
                ctx.entity_rows[e].is_some() && def.role_accepts(role, &ctx.entity_types[e])
            })
            .map(Some)
            .chain([None])
            .collect()
    }

    /// Logits (`options × 1`) for extending `prefix` with each option.
    fn step_logits(
        &self,
        g: &mut Graph<'_, f64>,
        ctx: &ErgContext,
        event_type: usize,
        prefix: &[Arg],
        options: &[Arg],
        drop: &mut Option<Dropout<'_>>,
    ) -> Result<Var> {
        let role = prefix.len();
        let offset = self.role_offset[event_type];
        let mut rows = vec![ctx.sentences];
        let mut nodes: Vec<Node> = (0..ctx.num_sentences).map(Node::Sentence).collect();
        for (k, a) in prefix.iter().enumerate() {
            if let Some(e) = *a {
                let Some(row) = ctx.entity_rows[e] else {
                    continue;
                };
                let re = g.gather_rows(ctx.role_embedding, &[offset + k])?;
                rows.push(g.add(row, re)?);
                nodes.push(Node::Entity {
                    entity: Some(e),
                    sentences: ctx.entity_sentences[e].clone(),
                });
            }
        }
        let first_option = nodes.len();
        let re = g.gather_rows(ctx.role_embedding, &[offset + role])?;
        for a in options {
            match *a {
                Some(e) => {
                    let row = ctx.entity_rows[e].ok_or_else(|| {
                        Error::shape("edag step", format!("entity {e} has no mention row"))
                    })?;
                    rows.push(g.add(row, re)?);
                    nodes.push(Node::Entity {
                        entity: Some(e),
                        sentences: ctx.entity_sentences[e].clone(),
                    });
                }
                None => {
                    rows.push(g.add(ctx.none_embedding, re)?);
                    nodes.push(Node::Entity {
                        entity: None,
                        sentences: Vec::new(),
                    });
                }
            }
        }
        let x = g.concat_rows(&rows)?;
        let t = if self.config.disable_raat2 {
            None
        } else {
            Some(self.build_tensor(&nodes, &ctx.triples, ctx.entity_rows.len())?)
        };
        let y = self.params.raat2.forward(g, x, t.as_ref(), drop)?;
        let opt_rows: Vec<usize> = (first_option..nodes.len()).collect();
        let y = g.gather_rows(y, &opt_rows)?;
        self.params.role_heads[offset + role].forward(g, y)
    }

    /// Forward and backward pass on one document under teacher forcing. `rng` drives negative
    /// sampling and dropout.
    pub fn document_loss(
        &self,
        doc: &PreparedDoc,
        lambdas: &[f64; 4],
        negative_ratio: usize,
        teacher_forcing: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<DocLoss> {
        let mut drop_rng = ChaCha8Rng::seed_from_u64(rng.gen());
        let mut drop = (self.config.dropout > 0.0).then_some(Dropout {
            rate: self.config.dropout,
            rng: &mut drop_rng,
        });
        let mut g = Graph::new(&self.store);
        let mut terms: Vec<(Var, f64)> = Vec::new();
        let mut losses = StageLosses::default();

        // Entity extraction.
        let (tokens, sentence_rows) = self.encode_tokens(&mut g, &doc.token_ids, &mut drop)?;
        let emissions = self.params.emission.forward(&mut g, tokens)?;
        let trans = g.param(self.params.transitions);
        let mut ne_terms = Vec::with_capacity(sentence_rows.len());
        for (rows, tags) in sentence_rows.iter().zip(&doc.gold.tags) {
            let e = g.gather_rows(emissions, rows)?;
            ne_terms.push(g.crf_nll(e, trans, tags)?);
        }
        let l_ne = g.sum_scalars(&ne_terms)?;
        losses.ne = g.value(l_ne).item();
        terms.push((l_ne, lambdas[0]));
        let enc = self.encode_nodes(&mut g, tokens, &sentence_rows, &doc.entities)?;

        // Relation extraction.
        let ents = self.relation_entities(&mut g, &enc, &doc.entities, &mut drop)?;
        let targets = single_label_targets(&doc.gold.relation_triples, &self.schema);
        let all_pairs = Self::candidate_pairs(&ents);
        let (mut pairs, mut negatives): (Vec<_>, Vec<_>) = all_pairs
            .iter()
            .copied()
            .partition(|p| targets.contains_key(p));
        let keep = negative_ratio * pairs.len().max(1);
        if negatives.len() > keep {
            negatives.shuffle(rng);
            negatives.truncate(keep);
            negatives.sort_unstable();
        }
        pairs.extend(negatives);
        let mut triples: Vec<RelationTriple> = doc.gold.relation_triples.iter().copied().collect();
        if !pairs.is_empty() {
            let logits = self.pair_logits(&mut g, &ents, &pairs)?;
            let labels: Vec<usize> = pairs
                .iter()
                .map(|p| targets.get(p).map_or(0, |r| r + 1))
                .collect();
            let l_dre = g.cross_entropy(logits, &labels)?;
            losses.dre = g.value(l_dre).item();
            terms.push((l_dre, lambdas[1]));
            if !teacher_forcing {
                let every = Self::candidate_pairs(&ents);
                let all_logits = self.pair_logits(&mut g, &ents, &every)?;
                triples = self.predict_triples(&g, all_logits, &every);
            }
        }

        // Relation-aware encoding and event-type classification.
        let enriched = self.encode_relations(&mut g, &enc, &doc.entities, &triples, &mut drop)?;
        let type_logits = self.type_logits(&mut g, enriched, &enc)?;
        let flags: Vec<f64> = doc
            .gold
            .event_type_flags
            .iter()
            .map(|&f| f as u8 as f64)
            .collect();
        let l_pred = g.bce_with_logits(type_logits, &flags)?;
        losses.pred = g.value(l_pred).item();
        terms.push((l_pred, lambdas[2]));

        // Record generation over gold paths.
        let ctx = self.erg_context(&mut g, enriched, &enc, &doc.entities, triples)?;
        let mut a_terms = Vec::new();
        for tree in &doc.gold.edag_paths {
            for (prefix, children) in tree.steps() {
                let mut options = self.role_options(&ctx, tree.event_type, prefix.len());
                for c in &children {
                    if !options.contains(c) && c.is_none_or(|e| ctx.entity_rows[e].is_some()) {
                        options.insert(options.len() - 1, *c);
                    }
                }
                let logits =
                    self.step_logits(&mut g, &ctx, tree.event_type, &prefix, &options, &mut drop)?;
                let y: Vec<f64> = options
                    .iter()
                    .map(|o| children.contains(o) as u8 as f64)
                    .collect();
                a_terms.push(g.bce_with_logits(logits, &y)?);
            }
        }
        if !a_terms.is_empty() {
            let l_a = g.sum_scalars(&a_terms)?;
            losses.a = g.value(l_a).item();
            terms.push((l_a, lambdas[3]));
        }

        let total = g.weighted_sum(&terms)?;
        let total_value = g.value(total).item();
        if !total_value.is_finite() {
            return Err(Error::NonFinite(format!("document loss {losses:?}")));
        }
        let grads = g.backward(total)?;
        Ok(DocLoss {
            losses,
            total: total_value,
            grads,
        })
    }

    /// Groups decoded spans into entities by surface; the first mention fixes the type.
    fn group_spans(&self, doc: &AnnotatedDocument, tags: &[Vec<usize>]) -> DocEntities {
        let mut by_surface: BTreeMap<String, usize> = BTreeMap::new();
        let mut out = DocEntities {
            mentions: Vec::new(),
            types: Vec::new(),
            surfaces: Vec::new(),
        };
        for (s, seq) in tags.iter().enumerate() {
            let sentence = &doc.document.sentences[s];
            for span in decode_bioes(seq, &self.tags) {
                if span.end > sentence.len() {
                    continue;
                }
                let surface = self
                    .config
                    .tokenization
                    .surface(&sentence[span.start..span.end]);
                let entity = *by_surface.entry(surface.clone()).or_insert_with(|| {
                    out.types
                        .push(self.tags.entity_types()[span.entity_type].clone());
                    out.surfaces.push(surface);
                    out.types.len() - 1
                });
                out.mentions.push(EntityMention {
                    sentence: s,
                    start: span.start,
                    end: span.end,
                    entity,
                });
            }
        }
        out
    }

    /// Full inference chain on one document.
    pub fn predict(&self, doc: &AnnotatedDocument) -> Result<DocumentPrediction> {
        let mut g = Graph::new(&self.store);
        let mut drop = None;
        let token_ids = self.token_ids(doc);
        let (tokens, sentence_rows) = self.encode_tokens(&mut g, &token_ids, &mut drop)?;
        let emissions = self.params.emission.forward(&mut g, tokens)?;
        let transitions = self.store.value(self.params.transitions);
        let tags = sentence_rows
            .iter()
            .map(|rows| viterbi(&g.value(emissions).select_rows(rows), transitions))
            .collect::<Result<Vec<_>>>()?;
        let entities = self.group_spans(doc, &tags);
        let enc = self.encode_nodes(&mut g, tokens, &sentence_rows, &entities)?;

        let ents = self.relation_entities(&mut g, &enc, &entities, &mut drop)?;
        let pairs = Self::candidate_pairs(&ents);
        let triples = if pairs.is_empty() {
            Vec::new()
        } else {
            let logits = self.pair_logits(&mut g, &ents, &pairs)?;
            self.predict_triples(&g, logits, &pairs)
        };

        let enriched = self.encode_relations(&mut g, &enc, &entities, &triples, &mut drop)?;
        let type_logits = self.type_logits(&mut g, enriched, &enc)?;
        let triggered: Vec<bool> = g
            .value(type_logits)
            .data()
            .iter()
            .map(|&z| sigmoid(z) > 0.5)
            .collect();

        let ctx = self.erg_context(&mut g, enriched, &enc, &entities, triples.clone())?;
        let mut records = Vec::new();
        for (et, _) in triggered.iter().enumerate().filter(|(_, &t)| t) {
            records.extend(self.decode_records(&mut g, &ctx, et, &triggered)?);
        }
        let surface_records = records
            .iter()
            .map(|r| SurfaceRecord {
                event_type: r.event_type,
                args: r
                    .args
                    .iter()
                    .map(|a| a.map(|e| entities.surfaces[e].clone()))
                    .collect(),
            })
            .collect();
        Ok(DocumentPrediction {
            doc_id: doc.document.doc_id.clone(),
            entities,
            triples,
            triggered,
            records,
            surface_records,
        })
    }

    fn decode_records(
        &self,
        g: &mut Graph<'_, f64>,
        ctx: &ErgContext,
        event_type: usize,
        triggered: &[bool],
    ) -> Result<Vec<EventRecord>> {
        if !triggered[event_type] {
            return Err(Error::Untriggered(
                self.ontology.event_types[event_type].name.clone(),
            ));
        }
        let num_roles = self.ontology.event_types[event_type].roles.len();
        let options = |r: usize| self.role_options(ctx, event_type, r);
        let mut scorer = ModelScorer {
            model: self,
            g,
            ctx,
        };
        decode_event_type(
            &mut scorer,
            event_type,
            num_roles,
            &options,
            self.config.branch_cap,
        )
    }
}

struct ModelScorer<'m, 'g, 's> {
    model: &'m ReDee,
    g: &'g mut Graph<'s, f64>,
    ctx: &'m ErgContext,
}

impl StepScorer for ModelScorer<'_, '_, '_> {
    fn score(&mut self, event_type: usize, prefix: &[Arg], options: &[Arg]) -> Result<Vec<f64>> {
        let logits = self
            .model
            .step_logits(self.g, self.ctx, event_type, prefix, options, &mut None)?;
        Ok(self
            .g
            .value(logits)
            .data()
            .iter()
            .map(|&z| sigmoid(z))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, SynthConfig};
    use crate::neural::{adam_step, AdamConfig};
    use crate::ontology::{Document, Tokenization};

    pub(crate) fn tiny_config() -> ModelConfig {
        ModelConfig {
            hidden: 16,
            ffn: 32,
            heads: 2,
            eer_layers: 1,
            dre_layers: 1,
            raat1_layers: 1,
            raat2_layers: 1,
            tokenization: Tokenization::Whitespace,
            ..ModelConfig::default()
        }
    }

    fn corpus(n: usize, seed: u64) -> Vec<AnnotatedDocument> {
        let cfg = SynthConfig {
            num_docs: n,
            seed,
            ..SynthConfig::default()
        };
        generate_synthetic_corpus(&cfg, &EventOntology::equity_default())
            .unwrap()
            .docs
    }

    fn model_for(docs: &[AnnotatedDocument], config: ModelConfig) -> ReDee {
        ReDee::new(
            config,
            EventOntology::equity_default(),
            Vocab::build(docs),
            5,
        )
        .unwrap()
    }

    fn loss(m: &ReDee, p: &PreparedDoc) -> DocLoss {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        m.document_loss(p, &[0.05, 1.0, 0.05, 0.95], 3, true, &mut rng)
            .unwrap()
    }

    #[test]
    fn document_without_entities_is_finite() {
        let doc = AnnotatedDocument {
            document: Document::new("empty", vec![vec!["a".into(), "b".into()], vec![]], 8, 8),
            entities: vec![],
            records: vec![],
        };
        let m = model_for(std::slice::from_ref(&doc), tiny_config());
        let p = m.prepare(&doc);
        assert!(p.entities.mentions.is_empty());
        let l = loss(&m, &p);
        assert!(l.total.is_finite());
        assert_eq!(l.losses.dre, 0.0);
        assert_eq!(l.losses.a, 0.0);
        assert!(m.predict(&doc).unwrap().records.is_empty());
    }

    #[test]
    fn teacher_forced_mentions_are_gold() {
        let docs = corpus(5, 1);
        let m = model_for(&docs, tiny_config());
        for d in &docs {
            let p = m.prepare(d);
            assert_eq!(p.entities.mentions, d.mentions());
        }
    }

    #[test]
    fn loss_decreases_on_a_fixed_document() {
        let docs = corpus(4, 2);
        let doc = docs.iter().max_by_key(|d| d.records.len()).unwrap();
        let mut m = model_for(std::slice::from_ref(doc), tiny_config());
        let p = m.prepare(doc);
        let adam = AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        };
        let first = loss(&m, &p).total;
        for _ in 0..50 {
            let l = loss(&m, &p);
            m.store.accumulate(&l.grads, 1.0);
            adam_step(&mut m.store, &adam).unwrap();
        }
        let last = loss(&m, &p).total;
        assert!(last < 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn every_component_receives_gradient() {
        let docs = corpus(30, 3);
        let doc = docs
            .iter()
            .find(|d| d.records.len() >= 2 && d.records.iter().all(|r| r.num_filled() >= 3))
            .unwrap();
        let mut m = model_for(std::slice::from_ref(doc), tiny_config());
        // Channel biases start at zero; perturb every parameter so no path is exactly flat.
        let ids: Vec<_> = m.store.ids().collect();
        for id in ids {
            for v in m.store.value_mut(id).data_mut() {
                *v += 0.01;
            }
        }
        let p = m.prepare(doc);
        let l = loss(&m, &p);
        m.store.accumulate(&l.grads, 1.0);
        for (group, ids) in m.param_groups() {
            let norm: f64 = ids
                .iter()
                .map(|&id| m.store.grad_norm(id).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(norm > 0.0, "no gradient reaches {group}");
        }
    }

    #[test]
    fn disabling_both_raat_stages_builds_no_tensor() {
        let docs = corpus(6, 4);
        let cfg = ModelConfig {
            disable_raat1: true,
            disable_raat2: true,
            ..tiny_config()
        };
        let m = model_for(&docs, cfg);
        for d in &docs {
            loss(&m, &m.prepare(d));
            m.predict(d).unwrap();
        }
        assert_eq!(m.tensor_builds(), 0);
        let full = model_for(&docs, tiny_config());
        loss(&full, &full.prepare(&docs[0]));
        assert!(full.tensor_builds() > 0);
    }

    #[test]
    fn zero_type_head_triggers_nothing() {
        let docs = corpus(5, 5);
        let mut m = model_for(&docs, tiny_config());
        let w = m.params.type_head.weight;
        m.store.value_mut(w).data_mut().fill(0.0);
        let b = m.params.type_head.bias.unwrap();
        m.store.value_mut(b).data_mut().fill(0.0);
        for d in &docs {
            let p = m.predict(d).unwrap();
            assert!(p.triggered.iter().all(|&t| !t));
            assert!(p.records.is_empty());
        }
    }

    #[test]
    fn untrained_model_predicts_without_error() {
        let docs = corpus(10, 6);
        let m = model_for(&docs, tiny_config());
        for d in &docs {
            let p = m.predict(d).unwrap();
            for r in &p.records {
                assert_eq!(
                    r.args.len(),
                    m.ontology.event_types[r.event_type].roles.len()
                );
            }
        }
    }

    #[test]
    fn decoding_an_untriggered_type_is_an_error() {
        let docs = corpus(1, 7);
        let m = model_for(&docs, tiny_config());
        let mut g = Graph::new(&m.store);
        let entities = m.prepare(&docs[0]).entities;
        let (tokens, rows) = m
            .encode_tokens(&mut g, &m.token_ids(&docs[0]), &mut None)
            .unwrap();
        let enc = m.encode_nodes(&mut g, tokens, &rows, &entities).unwrap();
        let ctx = m
            .erg_context(&mut g, enc.nodes, &enc, &entities, vec![])
            .unwrap();
        let err = m.decode_records(&mut g, &ctx, 0, &[false, false, false]);
        assert!(matches!(err, Err(Error::Untriggered(_))));
    }

    #[test]
    fn biaffine_separates_a_three_entity_toy() {
        // Three fixed, separable entity vectors; every ordered pair gets its own class.
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = store.add_uniform("w", &[3, 7, 3], &mut rng).unwrap();
        let e = Tensor::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let pairs: Vec<(usize, usize)> = (0..3)
            .flat_map(|h| (0..3).filter(move |&t| t != h).map(move |t| (h, t)))
            .collect();
        let labels: Vec<usize> = (0..pairs.len()).map(|i| i + 1).collect();
        let heads = e.select_rows(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
        let tails = e.select_rows(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
        let adam = AdamConfig {
            lr: 0.05,
            ..AdamConfig::default()
        };
        let mut correct = 0;
        for _ in 0..200 {
            let mut g = Graph::new(&store);
            let h = g.input(heads.clone()).unwrap();
            let t = g.input(tails.clone()).unwrap();
            let wv = g.param(w);
            let logits = g.biaffine(h, t, wv).unwrap();
            correct = (0..pairs.len())
                .filter(|&i| argmax(g.value(logits).row(i)) == labels[i])
                .count();
            let l = g.cross_entropy(logits, &labels).unwrap();
            let grads = g.backward(l).unwrap();
            store.accumulate(&grads, 1.0);
            adam_step(&mut store, &adam).unwrap();
        }
        assert_eq!(correct, pairs.len());
    }
}
