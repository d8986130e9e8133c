//! Forward/backward kernels on row-major matrices.
//!
//! Every `*_backward` takes the upstream gradient of the forward output and returns the
//! gradients of the forward inputs in argument order.

use super::Tensor;
use crate::{Error, Result, Scalar};

pub const LAYER_NORM_EPS: f64 = 1e-5;

fn check_2d<S: Scalar>(op: &'static str, t: &Tensor<S>) -> Result<()> {
    if t.shape().len() != 2 {
        return Err(Error::shape(
            op,
            format!("expected a matrix, got {:?}", t.shape()),
        ));
    }
    Ok(())
}

/// `a · b` for `a: m×k`, `b: k×n`.
pub fn matmul<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    check_2d("matmul", a)?;
    check_2d("matmul", b)?;
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    if b.rows() != k {
        return Err(Error::shape(
            "matmul",
            format!("{:?} x {:?}", a.shape(), b.shape()),
        ));
    }
    let mut out = vec![S::zero(); m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let x = ad[i * k + p];
            if x == S::zero() {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &y) in orow.iter_mut().zip(brow) {
                *o += x * y;
            }
        }
    }
    Ok(Tensor::matrix(m, n, out))
}

/// `a · bᵀ` for `a: m×k`, `b: n×k`.
pub fn matmul_nt<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    check_2d("matmul_nt", a)?;
    check_2d("matmul_nt", b)?;
    let (m, k, n) = (a.rows(), a.cols(), b.rows());
    if b.cols() != k {
        return Err(Error::shape(
            "matmul_nt",
            format!("{:?} x {:?}^T", a.shape(), b.shape()),
        ));
    }
    let mut out = vec![S::zero(); m * n];
    for i in 0..m {
        let ar = a.row(i);
        for j in 0..n {
            out[i * n + j] = ar.iter().zip(b.row(j)).map(|(&x, &y)| x * y).sum();
        }
    }
    Ok(Tensor::matrix(m, n, out))
}

/// `aᵀ · b` for `a: k×m`, `b: k×n`.
pub fn matmul_tn<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    check_2d("matmul_tn", a)?;
    check_2d("matmul_tn", b)?;
    let (k, m, n) = (a.rows(), a.cols(), b.cols());
    if b.rows() != k {
        return Err(Error::shape(
            "matmul_tn",
            format!("{:?}^T x {:?}", a.shape(), b.shape()),
        ));
    }
    let mut out = vec![S::zero(); m * n];
    for p in 0..k {
        let ar = a.row(p);
        let br = b.row(p);
        for (i, &x) in ar.iter().enumerate() {
            if x == S::zero() {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &y) in orow.iter_mut().zip(br) {
                *o += x * y;
            }
        }
    }
    Ok(Tensor::matrix(m, n, out))
}

pub fn matmul_backward<S: Scalar>(
    a: &Tensor<S>,
    b: &Tensor<S>,
    dc: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>)> {
    Ok((matmul_nt(dc, b)?, matmul_tn(a, dc)?))
}

/// `x · w + b` with `b` broadcast over rows.
pub fn linear_forward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    b: Option<&Tensor<S>>,
) -> Result<Tensor<S>> {
    let mut y = matmul(x, w)?;
    if let Some(b) = b {
        add_row_in_place(&mut y, b)?;
    }
    Ok(y)
}

/// Returns `(dx, dw, db)`.
pub fn linear_backward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    dy: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>)> {
    let (dx, dw) = matmul_backward(x, w, dy)?;
    Ok((dx, dw, column_sums(dy)))
}

pub(crate) fn add_row_in_place<S: Scalar>(y: &mut Tensor<S>, b: &Tensor<S>) -> Result<()> {
    let n = y.cols();
    if b.len() != n {
        return Err(Error::shape(
            "add_row",
            format!("bias {:?} for {:?}", b.shape(), y.shape()),
        ));
    }
    let bd = b.data().to_vec();
    for r in 0..y.rows() {
        for (o, &v) in y.row_mut(r).iter_mut().zip(&bd) {
            *o += v;
        }
    }
    Ok(())
}

/// `1 × cols` tensor of per-column sums.
pub fn column_sums<S: Scalar>(t: &Tensor<S>) -> Tensor<S> {
    let mut out = vec![S::zero(); t.cols()];
    for r in 0..t.rows() {
        for (o, &v) in out.iter_mut().zip(t.row(r)) {
            *o += v;
        }
    }
    Tensor::matrix(1, t.cols(), out)
}

/// Per-row normalization statistics kept for the backward pass.
#[derive(Clone, Debug)]
pub struct LayerNormCache<S> {
    pub normalized: Tensor<S>,
    pub inv_std: Vec<S>,
}

/// Row-wise layer normalization with affine `gain`/`bias` of shape `1 × d`.
pub fn layer_norm_forward<S: Scalar>(
    x: &Tensor<S>,
    gain: &Tensor<S>,
    bias: &Tensor<S>,
) -> Result<(Tensor<S>, LayerNormCache<S>)> {
    check_2d("layer_norm", x)?;
    let (n, d) = (x.rows(), x.cols());
    if gain.len() != d || bias.len() != d {
        return Err(Error::shape(
            "layer_norm",
            format!(
                "x {:?}, gain {:?}, bias {:?}",
                x.shape(),
                gain.shape(),
                bias.shape()
            ),
        ));
    }
    let eps = S::of(LAYER_NORM_EPS);
    let df = S::of(d as f64);
    let mut xhat = Tensor::zeros(&[n, d]);
    let mut y = Tensor::zeros(&[n, d]);
    let mut inv_std = Vec::with_capacity(n);
    for r in 0..n {
        let row = x.row(r);
        let mean = row.iter().copied().sum::<S>() / df;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / df;
        let inv = S::one() / (var + eps).sqrt();
        inv_std.push(inv);
        for j in 0..d {
            let h = (row[j] - mean) * inv;
            xhat.set(r, j, h);
            y.set(r, j, h * gain.data()[j] + bias.data()[j]);
        }
    }
    Ok((
        y,
        LayerNormCache {
            normalized: xhat,
            inv_std,
        },
    ))
}

/// Returns `(dx, dgain, dbias)`.
pub fn layer_norm_backward<S: Scalar>(
    cache: &LayerNormCache<S>,
    gain: &Tensor<S>,
    dy: &Tensor<S>,
) -> (Tensor<S>, Tensor<S>, Tensor<S>) {
    let xhat = &cache.normalized;
    let (n, d) = (xhat.rows(), xhat.cols());
    let df = S::of(d as f64);
    let mut dx = Tensor::zeros(&[n, d]);
    let mut dgain = vec![S::zero(); d];
    let mut dbias = vec![S::zero(); d];
    let mut dxhat = vec![S::zero(); d];
    for r in 0..n {
        let (hr, gr) = (xhat.row(r), dy.row(r));
        let mut sum_dh = S::zero();
        let mut sum_dh_h = S::zero();
        for j in 0..d {
            dgain[j] += gr[j] * hr[j];
            dbias[j] += gr[j];
            dxhat[j] = gr[j] * gain.data()[j];
            sum_dh += dxhat[j];
            sum_dh_h += dxhat[j] * hr[j];
        }
        let inv = cache.inv_std[r];
        let out = dx.row_mut(r);
        for j in 0..d {
            out[j] = inv / df * (df * dxhat[j] - sum_dh - hr[j] * sum_dh_h);
        }
    }
    (dx, Tensor::matrix(1, d, dgain), Tensor::matrix(1, d, dbias))
}

/// Row-wise softmax of `x + mask`; `mask` is additive (use `-1e9` for padded positions).
pub fn softmax_forward<S: Scalar>(x: &Tensor<S>, mask: Option<&Tensor<S>>) -> Result<Tensor<S>> {
    check_2d("softmax", x)?;
    if let Some(m) = mask {
        if m.shape() != x.shape() {
            return Err(Error::shape(
                "softmax",
                format!("mask {:?} for {:?}", m.shape(), x.shape()),
            ));
        }
    }
    let (n, d) = (x.rows(), x.cols());
    let mut y = Tensor::zeros(&[n, d]);
    for r in 0..n {
        let xr = x.row(r);
        let out = y.row_mut(r);
        for j in 0..d {
            out[j] = xr[j] + mask.map_or(S::zero(), |m| m.at(r, j));
        }
        let max = out.iter().copied().fold(S::neg_infinity(), S::max);
        let mut z = S::zero();
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            z += *o;
        }
        for o in out.iter_mut() {
            *o /= z;
        }
    }
    Ok(y)
}

pub fn softmax_backward<S: Scalar>(y: &Tensor<S>, dy: &Tensor<S>) -> Tensor<S> {
    let (n, d) = (y.rows(), y.cols());
    let mut dx = Tensor::zeros(&[n, d]);
    for r in 0..n {
        let (yr, gr) = (y.row(r), dy.row(r));
        let dot: S = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
        for (j, o) in dx.row_mut(r).iter_mut().enumerate() {
            *o = yr[j] * (gr[j] - dot);
        }
    }
    dx
}

fn gelu_inner<S: Scalar>(x: S) -> (S, S) {
    let c = S::of((2.0 / std::f64::consts::PI).sqrt());
    let k = S::of(0.044715);
    let u = c * (x + k * x * x * x);
    let t = u.tanh();
    let du = c * (S::one() + S::of(3.0) * k * x * x);
    (t, du)
}

/// Tanh-approximated GELU.
pub fn gelu_forward<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let half = S::of(0.5);
    x.map(|v| {
        let (t, _) = gelu_inner(v);
        half * v * (S::one() + t)
    })
}

pub fn gelu_backward<S: Scalar>(x: &Tensor<S>, dy: &Tensor<S>) -> Tensor<S> {
    let half = S::of(0.5);
    let mut dx = dy.clone();
    for (o, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        let (t, du) = gelu_inner(v);
        let g = half * (S::one() + t) + half * v * (S::one() - t * t) * du;
        *o *= g;
    }
    dx
}

/// Per-dimension maximum over the given rows; also returns the winning row per column.
///
/// Ties resolve to the lowest row index, so the result does not depend on row order.
pub fn span_max_pool<S: Scalar>(x: &Tensor<S>, rows: &[usize]) -> Result<(Tensor<S>, Vec<usize>)> {
    check_2d("span_max_pool", x)?;
    if rows.is_empty() {
        return Err(Error::Empty("span_max_pool"));
    }
    if let Some(&r) = rows.iter().find(|&&r| r >= x.rows()) {
        return Err(Error::shape(
            "span_max_pool",
            format!("row {r} out of range for {:?}", x.shape()),
        ));
    }
    let d = x.cols();
    let mut out = x.row(rows[0]).to_vec();
    let mut arg = vec![rows[0]; d];
    for &r in &rows[1..] {
        for (j, &v) in x.row(r).iter().enumerate() {
            if v > out[j] || (v == out[j] && r < arg[j]) {
                out[j] = v;
                arg[j] = r;
            }
        }
    }
    Ok((Tensor::matrix(1, d, out), arg))
}

pub fn span_max_pool_backward<S: Scalar>(
    input_shape: (usize, usize),
    argmax: &[usize],
    dy: &Tensor<S>,
) -> Tensor<S> {
    let mut dx = Tensor::zeros(&[input_shape.0, input_shape.1]);
    for (j, &r) in argmax.iter().enumerate() {
        let v = dx.at(r, j) + dy.data()[j];
        dx.set(r, j, v);
    }
    dx
}

fn check_biaffine<S: Scalar>(head: &Tensor<S>, tail: &Tensor<S>, w: &Tensor<S>) -> Result<usize> {
    let ws = w.shape();
    if ws.len() != 3
        || ws[0] != ws[2]
        || head.shape().len() != 2
        || tail.shape() != head.shape()
        || head.cols() != ws[0]
    {
        return Err(Error::shape(
            "biaffine",
            format!(
                "head {:?}, tail {:?}, weight {:?}",
                head.shape(),
                tail.shape(),
                ws
            ),
        ));
    }
    Ok(ws[1])
}

fn flat_weight<S: Scalar>(w: &Tensor<S>) -> Tensor<S> {
    let s = w.shape();
    Tensor::matrix(s[0], s[1] * s[2], w.data().to_vec())
}

/// Pairwise bilinear logits: row `p`, class `k` is `head[p]ᵀ · W[:, k, :] · tail[p]`.
///
/// `head`, `tail` are `P × d`; `w` is `d × c × d`. Returns `P × c`.
pub fn biaffine_forward<S: Scalar>(
    head: &Tensor<S>,
    tail: &Tensor<S>,
    w: &Tensor<S>,
) -> Result<Tensor<S>> {
    let c = check_biaffine(head, tail, w)?;
    let d = head.cols();
    let proj = matmul(head, &flat_weight(w))?;
    let p = head.rows();
    let mut out = vec![S::zero(); p * c];
    for i in 0..p {
        let pr = proj.row(i);
        let tr = tail.row(i);
        for k in 0..c {
            out[i * c + k] = pr[k * d..(k + 1) * d]
                .iter()
                .zip(tr)
                .map(|(&a, &b)| a * b)
                .sum();
        }
    }
    Ok(Tensor::matrix(p, c, out))
}

/// Returns `(dhead, dtail, dw)`.
pub fn biaffine_backward<S: Scalar>(
    head: &Tensor<S>,
    tail: &Tensor<S>,
    w: &Tensor<S>,
    dlogits: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>)> {
    let c = check_biaffine(head, tail, w)?;
    let d = head.cols();
    let wf = flat_weight(w);
    let proj = matmul(head, &wf)?;
    let p = head.rows();
    let mut dproj = Tensor::zeros(&[p, c * d]);
    let mut dtail = Tensor::zeros(&[p, d]);
    for i in 0..p {
        let gr = dlogits.row(i);
        let tr = tail.row(i).to_vec();
        let pr = proj.row(i).to_vec();
        let dp = dproj.row_mut(i);
        for k in 0..c {
            for b in 0..d {
                dp[k * d + b] = gr[k] * tr[b];
            }
        }
        let dt = dtail.row_mut(i);
        for k in 0..c {
            for b in 0..d {
                dt[b] += gr[k] * pr[k * d + b];
            }
        }
    }
    let dhead = matmul_nt(&dproj, &wf)?;
    let dw = matmul_tn(head, &dproj)?.reshape(w.shape())?;
    Ok((dhead, dtail, dw))
}

/// Logits for a single entity pair.
pub fn biaffine_score<S: Scalar>(e_i: &[S], e_j: &[S], w: &Tensor<S>) -> Result<Vec<S>> {
    let h = Tensor::matrix(1, e_i.len(), e_i.to_vec());
    let t = Tensor::matrix(1, e_j.len(), e_j.to_vec());
    Ok(biaffine_forward(&h, &t, w)?.into_data())
}

/// Index of the first maximal element.
pub fn argmax<S: Scalar>(xs: &[S]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn log_sum_exp<S: Scalar>(xs: &[S]) -> S {
    let max = xs.iter().copied().fold(S::neg_infinity(), S::max);
    if max == S::neg_infinity() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<S>().ln()
}

/// Summed softmax cross-entropy of `logits` (`P × c`) against one label per row.
/// Returns the loss and its gradient with respect to the logits.
pub fn cross_entropy<S: Scalar>(logits: &Tensor<S>, labels: &[usize]) -> Result<(S, Tensor<S>)> {
    if logits.rows() != labels.len() {
        return Err(Error::shape(
            "cross_entropy",
            format!("{} rows, {} labels", logits.rows(), labels.len()),
        ));
    }
    let probs = softmax_forward(logits, None)?;
    let mut loss = S::zero();
    let mut grad = probs.clone();
    for (r, &y) in labels.iter().enumerate() {
        if y >= logits.cols() {
            return Err(Error::shape(
                "cross_entropy",
                format!("label {y} out of range"),
            ));
        }
        loss -= logits.at(r, y) - log_sum_exp(logits.row(r));
        let v = grad.at(r, y) - S::one();
        grad.set(r, y, v);
    }
    Ok((loss, grad))
}

pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// Summed binary cross-entropy on logits. Returns the loss and its gradient.
pub fn bce_with_logits<S: Scalar>(logits: &Tensor<S>, targets: &[S]) -> Result<(S, Tensor<S>)> {
    if logits.len() != targets.len() {
        return Err(Error::shape(
            "bce_with_logits",
            format!("{} logits, {} targets", logits.len(), targets.len()),
        ));
    }
    let mut loss = S::zero();
    let mut grad = logits.clone();
    for ((g, &z), &y) in grad.data_mut().iter_mut().zip(logits.data()).zip(targets) {
        loss += z.max(S::zero()) - z * y + (S::one() + (-z.abs()).exp()).ln();
        *g = sigmoid(z) - y;
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_norm_of_constant_row_is_zero_before_affine() {
        let x = Tensor::<f64>::matrix(1, 4, vec![3.0; 4]);
        let g = Tensor::matrix(1, 4, vec![1.0; 4]);
        let b = Tensor::zeros(&[1, 4]);
        let (y, cache) = layer_norm_forward(&x, &g, &b).unwrap();
        assert!(cache.normalized.data().iter().all(|&v| v == 0.0));
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let y = softmax_forward(&Tensor::<f64>::zeros(&[1, 2]), None).unwrap();
        assert_eq!(y.data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_mask_removes_padded_columns() {
        let x = Tensor::<f64>::zeros(&[1, 3]);
        let mask = Tensor::matrix(1, 3, vec![0.0, 0.0, -1e9]);
        let y = softmax_forward(&x, Some(&mask)).unwrap();
        assert!((y.at(0, 0) - 0.5).abs() < 1e-12);
        assert!(y.at(0, 2) < 1e-300);
    }

    #[test]
    fn matmul_shape_mismatch_is_an_error() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        assert!(matmul(&a, &a).is_err());
        assert!(matmul_nt(&a, &Tensor::zeros(&[2, 2])).is_err());
    }

    #[test]
    fn matmul_variants_agree() {
        let a = Tensor::<f64>::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]);
        let b = Tensor::<f64>::matrix(3, 2, vec![7., 8., 9., 10., 11., 12.]);
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[58., 64., 139., 154.]);
        assert_eq!(matmul_nt(&a, &b.transpose()).unwrap(), c);
        assert_eq!(matmul_tn(&a.transpose(), &b).unwrap(), c);
    }

    #[test]
    fn max_pool_examples() {
        let x = Tensor::<f64>::matrix(2, 2, vec![1.0, -2.0, 0.0, 5.0]);
        let (y, _) = span_max_pool(&x, &[0, 1]).unwrap();
        assert_eq!(y.data(), &[1.0, 5.0]);
        let (y1, _) = span_max_pool(&x, &[1]).unwrap();
        assert_eq!(y1.data(), x.row(1));
        let (y2, arg2) = span_max_pool(&x, &[1, 0]).unwrap();
        let (_, arg) = span_max_pool(&x, &[0, 1]).unwrap();
        assert_eq!(y2, y);
        assert_eq!(arg2, arg);
        assert!(matches!(span_max_pool(&x, &[]), Err(Error::Empty(_))));
    }

    #[test]
    fn biaffine_scalar_arithmetic() {
        // d = 1, W[:, k, :] = k, e_i = 2, e_j = 3 → logits[k] = 6k.
        let c = 4;
        let w = Tensor::<f64>::from_vec(&[1, c, 1], (0..c).map(|k| k as f64).collect()).unwrap();
        let logits = biaffine_score(&[2.0], &[3.0], &w).unwrap();
        assert_eq!(logits, vec![0.0, 6.0, 12.0, 18.0]);
    }

    #[test]
    fn zero_biaffine_weight_predicts_class_zero() {
        let w = Tensor::<f64>::zeros(&[3, 5, 3]);
        let logits = biaffine_score(&[1.0, 2.0, 3.0], &[-1.0, 0.5, 2.0], &w).unwrap();
        assert!(logits.iter().all(|&v| v == 0.0));
        assert_eq!(argmax(&logits), 0);
    }

    #[test]
    fn bce_gradient_is_sigmoid_minus_target() {
        let z = Tensor::<f64>::matrix(1, 2, vec![0.0, 2.0]);
        let (loss, g) = bce_with_logits(&z, &[1.0, 0.0]).unwrap();
        let expected = std::f64::consts::LN_2 + (1.0 + 2f64.exp()).ln();
        assert!((loss - expected).abs() < 1e-12);
        assert!((g.data()[0] + 0.5).abs() < 1e-12);
    }
}
