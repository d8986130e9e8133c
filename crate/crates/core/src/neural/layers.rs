//! Parameterised building blocks composed on a [`Graph`].

use rand::{Rng, RngCore};

use super::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::{Error, Result, Scalar};

/// Inverted dropout applied to sublayer outputs while training.
pub struct Dropout<'r> {
    pub rate: f64,
    pub rng: &'r mut dyn RngCore,
}

impl Dropout<'_> {
    pub fn apply<S: Scalar>(&mut self, g: &mut Graph<'_, S>, x: Var) -> Result<Var> {
        if self.rate <= 0.0 {
            return Ok(x);
        }
        let (r, c) = g.shape(x);
        let keep = 1.0 - self.rate;
        let mask = (0..r * c)
            .map(|_| {
                if self.rng.gen::<f64>() < keep {
                    S::of(1.0 / keep)
                } else {
                    S::zero()
                }
            })
            .collect();
        g.mul_const(x, Tensor::matrix(r, c, mask))
    }
}

pub(crate) fn maybe_dropout<S: Scalar>(
    g: &mut Graph<'_, S>,
    x: Var,
    drop: &mut Option<Dropout<'_>>,
) -> Result<Var> {
    match drop {
        Some(d) => d.apply(g, x),
        None => Ok(x),
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let weight = store.add_uniform(format!("{name}.weight"), &[input, output], rng)?;
        let bias = if bias {
            Some(store.add_zeros(format!("{name}.bias"), &[1, output])?)
        } else {
            None
        };
        Ok(Linear { weight, bias })
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<'_, S>, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let y = g.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = g.param(b);
                g.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, dim: usize) -> Result<Self> {
        Ok(LayerNorm {
            gain: store.add_ones(format!("{name}.gain"), &[1, dim])?,
            bias: store.add_zeros(format!("{name}.bias"), &[1, dim])?,
        })
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<'_, S>, x: Var) -> Result<Var> {
        let (gain, bias) = (g.param(self.gain), g.param(self.bias));
        g.layer_norm(x, gain, bias)
    }
}

#[derive(Clone, Debug)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(FeedForward {
            inner: Linear::new(store, &format!("{name}.inner"), dim, hidden, true, rng)?,
            outer: Linear::new(store, &format!("{name}.outer"), hidden, dim, true, rng)?,
        })
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<'_, S>, x: Var) -> Result<Var> {
        let h = self.inner.forward(g, x)?;
        let h = g.gelu(h)?;
        self.outer.forward(g, h)
    }
}

/// Multi-head scaled dot-product attention.
///
/// `extra_scores`, when given, is an `n × n` score matrix added to every head before the
/// softmax; this is the hook the relation-augmented encoder uses.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::Config(format!(
                "hidden size {dim} is not divisible by {heads} heads"
            )));
        }
        Ok(MultiHeadAttention {
            query: Linear::new(store, &format!("{name}.query"), dim, dim, false, rng)?,
            key: Linear::new(store, &format!("{name}.key"), dim, dim, false, rng)?,
            value: Linear::new(store, &format!("{name}.value"), dim, dim, false, rng)?,
            output: Linear::new(store, &format!("{name}.output"), dim, dim, true, rng)?,
            heads,
        })
    }

    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        x: Var,
        extra_scores: Option<Var>,
        mask: Option<&Tensor<S>>,
    ) -> Result<Var> {
        let d = g.shape(x).1;
        let dh = d / self.heads;
        let q = self.query.forward(g, x)?;
        let k = self.key.forward(g, x)?;
        let v = self.value.forward(g, x)?;
        let scale = S::one() / S::of(dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qh, kh, vh) = if self.heads == 1 {
                (q, k, v)
            } else {
                (
                    g.slice_cols(q, h * dh, dh)?,
                    g.slice_cols(k, h * dh, dh)?,
                    g.slice_cols(v, h * dh, dh)?,
                )
            };
            let s = g.matmul_nt(qh, kh)?;
            let mut s = g.scale(s, scale)?;
            if let Some(extra) = extra_scores {
                s = g.add(s, extra)?;
            }
            let a = g.softmax(s, mask)?;
            outs.push(g.matmul(a, vh)?);
        }
        let o = if outs.len() == 1 {
            outs[0]
        } else {
            g.concat_cols(&outs)?
        };
        self.output.forward(g, o)
    }
}

/// Post-norm transformer block: `x ← LN(x + Attn(x))`, `x ← LN(x + FFN(x))`.
#[derive(Clone, Debug)]
pub struct TransformerBlock {
    pub attention: MultiHeadAttention,
    pub attention_norm: LayerNorm,
    pub feed_forward: FeedForward,
    pub output_norm: LayerNorm,
}

impl TransformerBlock {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        dims: BlockDims,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(TransformerBlock {
            attention: MultiHeadAttention::new(
                store,
                &format!("{name}.attention"),
                dims.hidden,
                dims.heads,
                rng,
            )?,
            attention_norm: LayerNorm::new(store, &format!("{name}.attention_norm"), dims.hidden)?,
            feed_forward: FeedForward::new(
                store,
                &format!("{name}.feed_forward"),
                dims.hidden,
                dims.ffn,
                rng,
            )?,
            output_norm: LayerNorm::new(store, &format!("{name}.output_norm"), dims.hidden)?,
        })
    }

    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        x: Var,
        extra_scores: Option<Var>,
        mask: Option<&Tensor<S>>,
        drop: &mut Option<Dropout<'_>>,
    ) -> Result<Var> {
        let a = self.attention.forward(g, x, extra_scores, mask)?;
        let a = maybe_dropout(g, a, drop)?;
        let h = g.add(x, a)?;
        let h = self.attention_norm.forward(g, h)?;
        let f = self.feed_forward.forward(g, h)?;
        let f = maybe_dropout(g, f, drop)?;
        let o = g.add(h, f)?;
        self.output_norm.forward(g, o)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockDims {
    pub hidden: usize,
    pub ffn: usize,
    pub heads: usize,
}

/// A stack of vanilla transformer blocks.
#[derive(Clone, Debug)]
pub struct TransformerEncoder {
    pub blocks: Vec<TransformerBlock>,
}

impl TransformerEncoder {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        layers: usize,
        dims: BlockDims,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let blocks = (0..layers)
            .map(|l| TransformerBlock::new(store, &format!("{name}.layer{l}"), dims, rng))
            .collect::<Result<_>>()?;
        Ok(TransformerEncoder { blocks })
    }

    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        mut x: Var,
        mask: Option<&Tensor<S>>,
        drop: &mut Option<Dropout<'_>>,
    ) -> Result<Var> {
        for b in &self.blocks {
            x = b.forward(g, x, None, mask, drop)?;
        }
        Ok(x)
    }
}

/// Additive attention mask for `n` positions of which the first `valid` are real.
pub fn padding_mask<S: Scalar>(n: usize, valid: usize) -> Tensor<S> {
    let mut m = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in valid..n {
            m.set(i, j, S::of(-1e9));
        }
    }
    m
}
