//! Relation-augmented attention blocks.
//!
//! Each block is a post-norm transformer block whose attention scores receive an extra term
//! computed from the dependency tensor `T`:
//!
//! ```text
//! Q_r = X W_rq,  K_r = X W_rk
//! S_a = Σ_c (Q_r M_c K_rᵀ ⊙ T_c) / √d  +  Σ_c bias_c · T_c
//! ```
//!
//! `S_a` is computed once at full width and added to every head's scaled dot-product scores
//! before the row softmax.

use rand::Rng;

use super::DependencyTensor;
use crate::neural::layers::{BlockDims, Dropout, Linear, TransformerBlock};
use crate::neural::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::{Error, Result, Scalar};

#[derive(Clone, Debug)]
pub struct RaatLayer {
    pub block: TransformerBlock,
    pub rel_query: Linear,
    pub rel_key: Linear,
    /// One `d × d` bilinear matrix per channel.
    pub channel_m: Vec<ParamId>,
    /// One `1 × 1` scalar per channel.
    pub channel_bias: Vec<ParamId>,
}

impl RaatLayer {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        dims: BlockDims,
        channels: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let block = TransformerBlock::new(store, name, dims, rng)?;
        let d = dims.hidden;
        let rel_query = Linear::new(store, &format!("{name}.rel_query"), d, d, false, rng)?;
        let rel_key = Linear::new(store, &format!("{name}.rel_key"), d, d, false, rng)?;
        let mut channel_m = Vec::with_capacity(channels);
        let mut channel_bias = Vec::with_capacity(channels);
        for c in 0..channels {
            channel_m.push(store.add_uniform(format!("{name}.channel{c}.m"), &[d, d], rng)?);
            channel_bias.push(store.add_zeros(format!("{name}.channel{c}.bias"), &[1, 1])?);
        }
        Ok(RaatLayer {
            block,
            rel_query,
            rel_key,
            channel_m,
            channel_bias,
        })
    }

    pub fn channels(&self) -> usize {
        self.channel_m.len()
    }

    /// The relation-augmented score matrix `S_a`. All-zero channels are skipped.
    pub fn relation_scores<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        x: Var,
        t: &DependencyTensor,
    ) -> Result<Option<Var>> {
        let (n, d) = g.shape(x);
        if t.channels() != self.channels() || t.nodes() != n {
            return Err(Error::shape(
                "raat",
                format!(
                    "tensor {}×{n}×{n} for {} channels over {} nodes",
                    t.channels(),
                    self.channels(),
                    t.nodes()
                ),
            ));
        }
        let qr = self.rel_query.forward(g, x)?;
        let kr = self.rel_key.forward(g, x)?;
        let mut terms: Vec<(Var, S)> = Vec::new();
        let inv_sqrt_d = S::one() / S::of(d as f64).sqrt();
        for c in 0..self.channels() {
            if t.channel_is_empty(c) {
                continue;
            }
            let mask = t.channel::<S>(c);
            let m = g.param(self.channel_m[c]);
            let qm = g.matmul(qr, m)?;
            let s = g.matmul_nt(qm, kr)?;
            let s = g.mul_const(s, mask.clone())?;
            terms.push((s, inv_sqrt_d));
            let b = g.param(self.channel_bias[c]);
            terms.push((g.scalar_mask(b, mask)?, S::one()));
        }
        if terms.is_empty() {
            return Ok(None);
        }
        g.weighted_sum(&terms).map(Some)
    }

    /// Attention sublayer output `O` (after the output projection).
    pub fn attention<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        x: Var,
        t: Option<&DependencyTensor>,
        mask: Option<&Tensor<S>>,
    ) -> Result<Var> {
        let extra = match t {
            Some(t) => self.relation_scores(g, x, t)?,
            None => None,
        };
        self.block.attention.forward(g, x, extra, mask)
    }

    /// Full block. `t = None` runs the underlying vanilla transformer block.
    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        x: Var,
        t: Option<&DependencyTensor>,
        mask: Option<&Tensor<S>>,
        drop: &mut Option<Dropout<'_>>,
    ) -> Result<Var> {
        let extra = match t {
            Some(t) => self.relation_scores(g, x, t)?,
            None => None,
        };
        self.block.forward(g, x, extra, mask, drop)
    }
}

/// A stack of [`RaatLayer`]s sharing one dependency tensor.
#[derive(Clone, Debug)]
pub struct RaatEncoder {
    pub layers: Vec<RaatLayer>,
}

impl RaatEncoder {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        num_layers: usize,
        dims: BlockDims,
        channels: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let layers = (0..num_layers)
            .map(|l| RaatLayer::new(store, &format!("{name}.layer{l}"), dims, channels, rng))
            .collect::<Result<_>>()?;
        Ok(RaatEncoder { layers })
    }

    /// Encodes node rows `x`. With `t = None` every layer runs as a vanilla block.
    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        mut x: Var,
        t: Option<&DependencyTensor>,
        drop: &mut Option<Dropout<'_>>,
    ) -> Result<Var> {
        for layer in &self.layers {
            x = layer.forward(g, x, t, None, drop)?;
        }
        Ok(x)
    }
}

/// Functional form of [`RaatEncoder::forward`] on a frozen store.
pub fn raat_encode<S: Scalar>(
    store: &ParamStore<S>,
    encoder: &RaatEncoder,
    x: &Tensor<S>,
    t: Option<&DependencyTensor>,
) -> Result<Tensor<S>> {
    let mut g = Graph::new(store);
    let xv = g.input(x.clone())?;
    let out = encoder.forward(&mut g, xv, t, &mut None)?;
    Ok(g.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::grad_check;
    use crate::ontology::{EntityMention, RelationSchema, RelationTriple, RelationType};
    use crate::raat::dependency::{build_dependency_tensor, document_nodes, CO_RELATION};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn schema(h: usize) -> RelationSchema {
        RelationSchema {
            relation_types: (0..h)
                .map(|k| RelationType {
                    event_type: 0,
                    head_role: k,
                    tail_role: k + 1,
                    name: format!("R{k}2R{}", k + 1),
                })
                .collect(),
            head_cluster: (0..h).collect(),
            cluster_names: (0..h).map(|k| format!("R{k}")).collect(),
        }
    }

    fn random_x(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Tensor<f64> {
        Tensor::matrix(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    fn randomize(store: &mut ParamStore<f64>, rng: &mut ChaCha8Rng) {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            for v in store.value_mut(id).data_mut() {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
    }

    /// Two entities over three mentions and two sentences, one relation.
    fn fixture() -> (Vec<crate::raat::Node>, DependencyTensor) {
        let ms = [(0, 0), (0, 1), (1, 1)].map(|(entity, sentence)| EntityMention {
            sentence,
            start: 0,
            end: 1,
            entity,
        });
        let nodes = document_nodes(&ms, 2);
        let t = build_dependency_tensor(
            &nodes,
            &[RelationTriple {
                head: 0,
                tail: 1,
                relation: 0,
            }],
            &schema(1),
            2,
            false,
        )
        .unwrap();
        (nodes, t)
    }

    fn dims(d: usize, heads: usize) -> BlockDims {
        BlockDims {
            hidden: d,
            ffn: 2 * d,
            heads,
        }
    }

    #[test]
    fn zero_relation_channels_reduce_to_vanilla() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let layer = RaatLayer::new(&mut store, "l", dims(8, 2), 4, &mut rng).unwrap();
        randomize(&mut store, &mut rng);
        for c in 0..layer.channels() {
            *store.value_mut(layer.channel_m[c]) = Tensor::zeros(&[8, 8]);
            *store.value_mut(layer.channel_bias[c]) = Tensor::zeros(&[1, 1]);
        }
        let (_, mut t) = fixture();
        for c in 1..t.channels() {
            t.zero_channel(c);
        }
        let x = random_x(&mut rng, 5, 8);
        let mut g = Graph::new(&store);
        let xv = g.input(x).unwrap();
        let a = layer
            .forward(&mut g, xv, Some(&t), None, &mut None)
            .unwrap();
        let b = layer.forward(&mut g, xv, None, None, &mut None).unwrap();
        assert!(g.value(a).max_abs_diff(g.value(b)) <= 1e-10);
    }

    #[test]
    fn single_node_attends_to_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let layer = RaatLayer::new(&mut store, "l", dims(4, 1), 3, &mut rng).unwrap();
        randomize(&mut store, &mut rng);
        let t =
            build_dependency_tensor(&[crate::raat::Node::Sentence(0)], &[], &schema(0), 0, false)
                .unwrap();
        let x = random_x(&mut rng, 1, 4);
        let mut g = Graph::new(&store);
        let xv = g.input(x).unwrap();
        let o = layer.attention(&mut g, xv, Some(&t), None).unwrap();
        let v = layer.block.attention.value.forward(&mut g, xv).unwrap();
        let expected = layer.block.attention.output.forward(&mut g, v).unwrap();
        assert!(g.value(o).max_abs_diff(g.value(expected)) < 1e-12);
    }

    #[test]
    fn attention_gradients_match_finite_differences() {
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut store = ParamStore::new();
            // 4 channels: NA, Co-reference, Co-existence, one relation cluster.
            let layer = RaatLayer::new(&mut store, "l", dims(4, 2), 4, &mut rng).unwrap();
            randomize(&mut store, &mut rng);
            let (_, t) = fixture();
            assert!(!t.channel_is_empty(CO_RELATION));
            let x = random_x(&mut rng, 5, 4);
            let w = random_x(&mut rng, 5, 4);
            let report = grad_check(
                &mut store,
                |st| {
                    let mut g = Graph::new(st);
                    let xv = g.input(x.clone())?;
                    let o = layer.forward(&mut g, xv, Some(&t), None, &mut None)?;
                    let wv = g.input(w.clone())?;
                    let o = g.mul_const(o, g.value(wv).clone())?;
                    let ones = g.input(Tensor::filled(&[4, 1], 1.0))?;
                    let r = g.matmul(o, ones)?;
                    let ones_row = g.input(Tensor::filled(&[1, 5], 1.0))?;
                    let loss = g.matmul(ones_row, r)?;
                    let grads = g.backward(loss)?;
                    Ok((g.value(loss).item(), grads))
                },
                1e-4,
            )
            .unwrap();
            assert!(report.passed(), "seed {seed}\n{report}");
        }
    }

    #[test]
    fn encoder_is_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let enc = RaatEncoder::new(&mut store, "enc", 2, dims(8, 2), 4, &mut rng).unwrap();
        randomize(&mut store, &mut rng);
        let (_, t) = fixture();
        let x = random_x(&mut rng, 5, 8);
        let out = raat_encode(&store, &enc, &x, Some(&t)).unwrap();
        let perm = [3, 0, 4, 2, 1];
        let xp = x.select_rows(&perm);
        let tp = t.permuted(&perm);
        let outp = raat_encode(&store, &enc, &xp, Some(&tp)).unwrap();
        assert!(outp.max_abs_diff(&out.select_rows(&perm)) < 1e-10);
    }

    #[test]
    fn zero_layers_is_identity_and_sizes_adapt() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let empty = RaatEncoder::new(&mut store, "none", 0, dims(4, 1), 4, &mut rng).unwrap();
        let x = random_x(&mut rng, 3, 4);
        assert_eq!(raat_encode(&store, &empty, &x, None).unwrap(), x);

        let enc = RaatEncoder::new(&mut store, "enc", 1, dims(4, 1), 4, &mut rng).unwrap();
        let (_, t5) = fixture();
        let t2 =
            build_dependency_tensor(&document_nodes(&[], 2), &[], &schema(1), 0, false).unwrap();
        let o5 = raat_encode(&store, &enc, &random_x(&mut rng, 5, 4), Some(&t5)).unwrap();
        let o2 = raat_encode(&store, &enc, &random_x(&mut rng, 2, 4), Some(&t2)).unwrap();
        assert_eq!((o5.rows(), o2.rows()), (5, 2));
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut store = ParamStore::new();
        let enc = RaatEncoder::new(&mut store, "enc", 1, dims(4, 1), 5, &mut rng).unwrap();
        let (_, t) = fixture();
        assert!(raat_encode(&store, &enc, &random_x(&mut rng, 5, 4), Some(&t)).is_err());
    }
}
