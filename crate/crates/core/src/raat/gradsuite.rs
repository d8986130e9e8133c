//! Finite-difference checks over every differentiable component used by the pipeline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DependencyTensor, RaatLayer};
use crate::neural::layers::{BlockDims, TransformerBlock};
use crate::neural::{grad_check, GradCheckReport, Graph, ParamStore, Tensor, Var};
use crate::Result;

pub const GRADIENT_TOLERANCE: f64 = 1e-4;

/// Component names in check order.
pub const GRADIENT_COMPONENTS: [&str; 5] = [
    "transformer_block",
    "crf_nll",
    "biaffine",
    "raat_layer",
    "pooling_heads",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SuiteDims {
    pub block: BlockDims,
    pub nodes: usize,
    /// Dependency channels for the RAAT check (all populated).
    pub channels: usize,
    pub tags: usize,
}

impl Default for SuiteDims {
    fn default() -> Self {
        SuiteDims {
            block: BlockDims {
                hidden: 8,
                ffn: 8,
                heads: 2,
            },
            nodes: 6,
            channels: 4,
            tags: 5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SuiteCheck {
    pub component: &'static str,
    pub seed: u64,
    pub report: GradCheckReport,
}

fn randomize(store: &mut ParamStore<f64>, rng: &mut ChaCha8Rng) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for v in store.value_mut(id).data_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
}

/// `Σ w ⊙ y` for a fixed random `w`, so no direction of `y` is invisible to the check.
fn project(g: &mut Graph<'_, f64>, y: Var, w: &Tensor<f64>) -> Result<Var> {
    let (n, d) = g.shape(y);
    let y = g.mul_const(y, w.clone())?;
    let ones_c = g.input(Tensor::filled(&[d, 1], 1.0))?;
    let col = g.matmul(y, ones_c)?;
    let ones_r = g.input(Tensor::filled(&[1, n], 1.0))?;
    g.matmul(ones_r, col)
}

fn check_one(component: &'static str, seed: u64, dims: SuiteDims) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let d = dims.block.hidden;
    let n = dims.nodes;
    match component {
        "transformer_block" => {
            let block = TransformerBlock::new(&mut store, "block", dims.block, &mut rng)?;
            let x = store.add("x", random(&mut rng, n, d))?;
            randomize(&mut store, &mut rng);
            let w = random(&mut rng, n, d);
            grad_check(
                &mut store,
                |st| {
                    let mut g = Graph::new(st);
                    let xv = g.param(x);
                    let y = block.forward(&mut g, xv, None, None, &mut None)?;
                    let loss = project(&mut g, y, &w)?;
                    Ok((g.value(loss).item(), g.backward(loss)?))
                },
                GRADIENT_TOLERANCE,
            )
        }
        "crf_nll" => {
            let k = dims.tags;
            let len = n.min(4);
            let e = store.add("emissions", random(&mut rng, len, k))?;
            let t = store.add("transitions", random(&mut rng, k + 2, k + 2))?;
            let tags: Vec<usize> = (0..len).map(|_| rng.gen_range(0..k)).collect();
            grad_check(
                &mut store,
                |st| {
                    let mut g = Graph::new(st);
                    let (ev, tv) = (g.param(e), g.param(t));
                    let loss = g.crf_nll(ev, tv, &tags)?;
                    Ok((g.value(loss).item(), g.backward(loss)?))
                },
                GRADIENT_TOLERANCE,
            )
        }
        "biaffine" => {
            let c = 3;
            let h = store.add("head", random(&mut rng, n, d))?;
            let t = store.add("tail", random(&mut rng, n, d))?;
            let w = store.add_uniform("w", &[d, c, d], &mut rng)?;
            randomize(&mut store, &mut rng);
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
            grad_check(
                &mut store,
                |st| {
                    let mut g = Graph::new(st);
                    let (hv, tv, wv) = (g.param(h), g.param(t), g.param(w));
                    let logits = g.biaffine(hv, tv, wv)?;
                    let loss = g.cross_entropy(logits, &labels)?;
                    Ok((g.value(loss).item(), g.backward(loss)?))
                },
                GRADIENT_TOLERANCE,
            )
        }
        "raat_layer" => {
            let layer = RaatLayer::new(&mut store, "raat", dims.block, dims.channels, &mut rng)?;
            let x = store.add("x", random(&mut rng, n, d))?;
            randomize(&mut store, &mut rng);
            // Every ordered pair sits in exactly one channel; each channel is non-empty.
            let mut dep = DependencyTensor::new(dims.channels, n);
            for i in 0..n {
                for j in 0..n {
                    dep.set((i * n + j) % dims.channels, i, j);
                }
            }
            let w = random(&mut rng, n, d);
            grad_check(
                &mut store,
                |st| {
                    let mut g = Graph::new(st);
                    let xv = g.param(x);
                    let y = layer.forward(&mut g, xv, Some(&dep), None, &mut None)?;
                    let loss = project(&mut g, y, &w)?;
                    Ok((g.value(loss).item(), g.backward(loss)?))
                },
                GRADIENT_TOLERANCE,
            )
        }
        "pooling_heads" => {
            let x = store.add("x", random(&mut rng, n, d))?;
            let head = store.add("head", random(&mut rng, d, 2))?;
            let split = n / 2;
            let (a, b): (Vec<usize>, Vec<usize>) =
                ((0..split.max(1)).collect(), (split..n).collect());
            let targets = [1.0, 0.0, 1.0, 0.0];
            grad_check(
                &mut store,
                |st| {
                    let mut g = Graph::new(st);
                    let xv = g.param(x);
                    let pa = g.max_pool(xv, &a)?;
                    let pb = g.max_pool(xv, &b)?;
                    let rows = g.concat_rows(&[pa, pb])?;
                    let hv = g.param(head);
                    let logits = g.matmul(rows, hv)?;
                    let bce = g.bce_with_logits(logits, &targets)?;
                    let picked = g.gather_rows(xv, &[0, n - 1])?;
                    let hw = g.param(head);
                    let l2 = g.matmul(picked, hw)?;
                    let ce = g.cross_entropy(l2, &[1, 0])?;
                    let loss = g.weighted_sum(&[(bce, 1.0), (ce, 0.5)])?;
                    Ok((g.value(loss).item(), g.backward(loss)?))
                },
                GRADIENT_TOLERANCE,
            )
        }
        other => Err(crate::Error::Config(format!(
            "unknown gradient component {other:?}"
        ))),
    }
}

/// Runs every component in [`GRADIENT_COMPONENTS`] once per seed.
pub fn gradient_suite(
    seeds: impl IntoIterator<Item = u64>,
    dims: SuiteDims,
) -> Result<Vec<SuiteCheck>> {
    let mut out = Vec::new();
    for seed in seeds {
        for component in GRADIENT_COMPONENTS {
            let report = check_one(component, seed, dims)?;
            out.push(SuiteCheck {
                component,
                seed,
                report,
            });
        }
    }
    Ok(out)
}
