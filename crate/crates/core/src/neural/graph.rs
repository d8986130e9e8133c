//! Reverse-mode tape over the kernels in [`super::ops`] and [`super::crf`].
//!
//! A [`Graph`] borrows a frozen [`ParamStore`]; parameter values are never copied into the
//! tape. [`Graph::backward`] returns sparse [`Gradients`] so that several graphs can be
//! evaluated independently and their gradients reduced in a fixed order.

use super::{crf, ops, Gradients, ParamId, ParamStore, Tensor};
use crate::{Error, Result, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<S> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, S),
    MulConst(Var, Tensor<S>),
    ScalarMask(Var, Tensor<S>),
    Gelu(Var),
    LayerNorm(Var, Var, Var, ops::LayerNormCache<S>),
    Softmax(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    MaxPool(Var, Vec<usize>),
    Biaffine(Var, Var, Var),
    LossGrad(Var, Tensor<S>),
    Crf(Var, Var, Vec<usize>),
    WeightedSum(Vec<(Var, S)>),
}

enum Value<S> {
    Owned(Tensor<S>),
    Param(ParamId),
}

struct Node<S> {
    op: Op<S>,
    value: Value<S>,
}

pub struct Graph<'a, S: Scalar> {
    store: &'a ParamStore<S>,
    nodes: Vec<Node<S>>,
    param_vars: Vec<Option<Var>>,
}

impl<'a, S: Scalar> Graph<'a, S> {
    pub fn new(store: &'a ParamStore<S>) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_vars: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'a ParamStore<S> {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.store.value(*id),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let t = self.value(v);
        (t.rows(), t.cols())
    }

    fn push(&mut self, op: Op<S>, value: Tensor<S>, name: &'static str) -> Result<Var> {
        value.check_finite(name)?;
        self.nodes.push(Node {
            op,
            value: Value::Owned(value),
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Constant input (no gradient flows out of the tape through it).
    pub fn input(&mut self, t: Tensor<S>) -> Result<Var> {
        self.push(Op::Leaf, t, "input")
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: Value::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::matmul(self.value(a), self.value(b))?;
        self.push(Op::MatMul(a, b), y, "matmul")
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::matmul_nt(self.value(a), self.value(b))?;
        self.push(Op::MatMulNT(a, b), y, "matmul_nt")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::shape(
                "add",
                format!("{:?} + {:?}", x.shape(), y.shape()),
            ));
        }
        let mut out = x.clone();
        out.add_assign(y);
        self.push(Op::Add(a, b), out, "add")
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let mut out = self.value(a).clone();
        ops::add_row_in_place(&mut out, self.value(row))?;
        self.push(Op::AddRow(a, row), out, "add_row")
    }

    pub fn scale(&mut self, a: Var, s: S) -> Result<Var> {
        let out = self.value(a).map(|v| v * s);
        self.push(Op::Scale(a, s), out, "scale")
    }

    /// Elementwise product with a constant tensor.
    pub fn mul_const(&mut self, a: Var, c: Tensor<S>) -> Result<Var> {
        let x = self.value(a);
        if x.shape() != c.shape() {
            return Err(Error::shape(
                "mul_const",
                format!("{:?} * {:?}", x.shape(), c.shape()),
            ));
        }
        let mut out = x.clone();
        for (o, &m) in out.data_mut().iter_mut().zip(c.data()) {
            *o *= m;
        }
        self.push(Op::MulConst(a, c), out, "mul_const")
    }

    /// A learned `1 × 1` scalar times a constant tensor.
    pub fn scalar_mask(&mut self, s: Var, mask: Tensor<S>) -> Result<Var> {
        let sv = self.value(s);
        if sv.len() != 1 {
            return Err(Error::shape(
                "scalar_mask",
                format!("scalar {:?}", sv.shape()),
            ));
        }
        let k = sv.item();
        let out = mask.map(|m| m * k);
        self.push(Op::ScalarMask(s, mask), out, "scalar_mask")
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let y = ops::gelu_forward(self.value(a));
        self.push(Op::Gelu(a), y, "gelu")
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (y, cache) =
            ops::layer_norm_forward(self.value(x), self.value(gain), self.value(bias))?;
        self.push(Op::LayerNorm(x, gain, bias, cache), y, "layer_norm")
    }

    /// Row softmax of `a + mask` where `mask` is an additive constant.
    pub fn softmax(&mut self, a: Var, mask: Option<&Tensor<S>>) -> Result<Var> {
        let y = ops::softmax_forward(self.value(a), mask)?;
        self.push(Op::Softmax(a), y, "softmax")
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if start + len > x.cols() {
            return Err(Error::shape(
                "slice_cols",
                format!("{start}+{len} of {:?}", x.shape()),
            ));
        }
        let mut out = Vec::with_capacity(x.rows() * len);
        for r in 0..x.rows() {
            out.extend_from_slice(&x.row(r)[start..start + len]);
        }
        let y = Tensor::matrix(x.rows(), len, out);
        self.push(Op::SliceCols(a, start), y, "slice_cols")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(Error::shape(
                    "concat_cols",
                    format!("row counts differ: {:?}", t.shape()),
                ));
            }
            cols += t.cols();
        }
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let y = Tensor::matrix(rows, cols, out);
        self.push(Op::ConcatCols(parts.to_vec()), y, "concat_cols")
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Empty("concat_rows"));
        }
        let cols = self.value(parts[0]).cols();
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(Error::shape(
                    "concat_rows",
                    format!("column counts differ: {:?}", t.shape()),
                ));
            }
            rows += t.rows();
            out.extend_from_slice(t.data());
        }
        let y = Tensor::matrix(rows, cols, out);
        self.push(Op::ConcatRows(parts.to_vec()), y, "concat_rows")
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let x = self.value(a);
        if let Some(&r) = rows.iter().find(|&&r| r >= x.rows()) {
            return Err(Error::shape(
                "gather_rows",
                format!("row {r} of {:?}", x.shape()),
            ));
        }
        let y = x.select_rows(rows);
        self.push(Op::GatherRows(a, rows.to_vec()), y, "gather_rows")
    }

    /// Per-dimension max over `rows`; a `1 × d` result.
    pub fn max_pool(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let (y, arg) = ops::span_max_pool(self.value(a), rows)?;
        self.push(Op::MaxPool(a, arg), y, "max_pool")
    }

    pub fn biaffine(&mut self, head: Var, tail: Var, w: Var) -> Result<Var> {
        let y = ops::biaffine_forward(self.value(head), self.value(tail), self.value(w))?;
        self.push(Op::Biaffine(head, tail, w), y, "biaffine")
    }

    /// Summed softmax cross-entropy; a `1 × 1` result.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (loss, grad) = ops::cross_entropy(self.value(logits), labels)?;
        self.push(
            Op::LossGrad(logits, grad),
            Tensor::scalar(loss),
            "cross_entropy",
        )
    }

    /// Summed binary cross-entropy on logits; a `1 × 1` result.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[S]) -> Result<Var> {
        let (loss, grad) = ops::bce_with_logits(self.value(logits), targets)?;
        self.push(
            Op::LossGrad(logits, grad),
            Tensor::scalar(loss),
            "bce_with_logits",
        )
    }

    /// CRF negative log-likelihood of `tags`; a `1 × 1` result.
    pub fn crf_nll(&mut self, emissions: Var, transitions: Var, tags: &[usize]) -> Result<Var> {
        let nll = crf::crf_nll_forward(self.value(emissions), self.value(transitions), tags)?;
        self.push(
            Op::Crf(emissions, transitions, tags.to_vec()),
            Tensor::scalar(nll),
            "crf_nll",
        )
    }

    /// `Σ wᵢ · termᵢ` over same-shaped terms.
    pub fn weighted_sum(&mut self, terms: &[(Var, S)]) -> Result<Var> {
        let Some(&(first, _)) = terms.first() else {
            return Err(Error::Empty("weighted_sum"));
        };
        let mut total = Tensor::zeros(self.value(first).shape());
        for &(v, w) in terms {
            let t = self.value(v);
            if t.shape() != total.shape() {
                return Err(Error::shape(
                    "weighted_sum",
                    format!("term {:?} vs {:?}", t.shape(), total.shape()),
                ));
            }
            total.add_scaled(t, w);
        }
        self.push(Op::WeightedSum(terms.to_vec()), total, "weighted_sum")
    }

    pub fn sum_scalars(&mut self, terms: &[Var]) -> Result<Var> {
        let t: Vec<(Var, S)> = terms.iter().map(|&v| (v, S::one())).collect();
        self.weighted_sum(&t)
    }

    /// Gradients of the scalar `loss` with respect to every parameter reached.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor<S>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), S::one()));
        let mut out = Gradients::new(self.store.len());

        fn acc<S: Scalar>(grads: &mut [Option<Tensor<S>>], v: Var, g: Tensor<S>) {
            match &mut grads[v.0] {
                Some(t) => t.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Param(id) => out.add_owned(*id, g),
                Op::MatMul(a, b) => {
                    let (da, db) = ops::matmul_backward(self.value(*a), self.value(*b), &g)?;
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::MatMulNT(a, b) => {
                    // y = a bᵀ: da = g b, db = gᵀ a.
                    let da = ops::matmul(&g, self.value(*b))?;
                    let db = ops::matmul_tn(&g, self.value(*a))?;
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::AddRow(a, row) => {
                    let dr = ops::column_sums(&g).reshape(self.value(*row).shape())?;
                    acc(&mut grads, *row, dr);
                    acc(&mut grads, *a, g);
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    acc(&mut grads, *a, g.map(|v| v * s));
                }
                Op::MulConst(a, c) => {
                    let mut d = g;
                    for (o, &m) in d.data_mut().iter_mut().zip(c.data()) {
                        *o *= m;
                    }
                    acc(&mut grads, *a, d);
                }
                Op::ScalarMask(s, mask) => {
                    let d: S = g.data().iter().zip(mask.data()).map(|(&x, &m)| x * m).sum();
                    let shape = self.value(*s).shape().to_vec();
                    acc(&mut grads, *s, Tensor::from_vec(&shape, vec![d])?);
                }
                Op::Gelu(a) => {
                    acc(&mut grads, *a, ops::gelu_backward(self.value(*a), &g));
                }
                Op::LayerNorm(x, gain, bias, cache) => {
                    let (dx, dg, db) = ops::layer_norm_backward(cache, self.value(*gain), &g);
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *gain, dg.reshape(self.value(*gain).shape())?);
                    acc(&mut grads, *bias, db.reshape(self.value(*bias).shape())?);
                }
                Op::Softmax(a) => {
                    let y = self.value(Var(i));
                    acc(&mut grads, *a, ops::softmax_backward(y, &g));
                }
                Op::SliceCols(a, start) => {
                    let x = self.value(*a);
                    let mut d = Tensor::zeros(&[x.rows(), x.cols()]);
                    let len = g.cols();
                    for r in 0..x.rows() {
                        d.row_mut(r)[*start..*start + len].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *a, d);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let c = self.value(p).cols();
                        let mut d = Vec::with_capacity(g.rows() * c);
                        for r in 0..g.rows() {
                            d.extend_from_slice(&g.row(r)[off..off + c]);
                        }
                        acc(&mut grads, p, Tensor::matrix(g.rows(), c, d));
                        off += c;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    let cols = g.cols();
                    for &p in parts {
                        let r = self.value(p).rows();
                        let d = g.data()[off * cols..(off + r) * cols].to_vec();
                        let shape = self.value(p).shape().to_vec();
                        acc(&mut grads, p, Tensor::from_vec(&shape, d)?);
                        off += r;
                    }
                }
                Op::GatherRows(a, rows) => {
                    let x = self.value(*a);
                    let mut d = Tensor::zeros(x.shape());
                    for (k, &r) in rows.iter().enumerate() {
                        for (o, &v) in d.row_mut(r).iter_mut().zip(g.row(k)) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *a, d);
                }
                Op::MaxPool(a, arg) => {
                    let (r, c) = self.shape(*a);
                    acc(&mut grads, *a, ops::span_max_pool_backward((r, c), arg, &g));
                }
                Op::Biaffine(h, t, w) => {
                    let (dh, dt, dw) =
                        ops::biaffine_backward(self.value(*h), self.value(*t), self.value(*w), &g)?;
                    acc(&mut grads, *h, dh);
                    acc(&mut grads, *t, dt);
                    acc(&mut grads, *w, dw);
                }
                Op::LossGrad(logits, local) => {
                    let s = g.item();
                    acc(&mut grads, *logits, local.map(|v| v * s));
                }
                Op::Crf(em, tr, tags) => {
                    let s = g.item();
                    let (de, dt) = crf::crf_nll_backward(self.value(*em), self.value(*tr), tags)?;
                    acc(&mut grads, *em, de.map(|v| v * s));
                    acc(&mut grads, *tr, dt.map(|v| v * s));
                }
                Op::WeightedSum(terms) => {
                    for &(v, w) in terms {
                        acc(&mut grads, v, g.map(|x| x * w));
                    }
                }
            }
        }
        Ok(out)
    }
}
