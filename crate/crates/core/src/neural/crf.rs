//! Linear-chain conditional random field over emission scores.
//!
//! Transitions are a `(K+2) × (K+2)` matrix: rows/columns `0..K` are tags, `K` is the
//! begin-of-sequence state and `K+1` the end-of-sequence state. Entry `(i, j)` scores `i → j`.

use super::ops::log_sum_exp;
use super::Tensor;
use crate::{Error, Result, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct CrfParams<S> {
    pub transitions: Tensor<S>,
}

impl<S: Scalar> CrfParams<S> {
    pub fn zeros(num_tags: usize) -> Self {
        CrfParams {
            transitions: Tensor::zeros(&[num_tags + 2, num_tags + 2]),
        }
    }

    pub fn num_tags(&self) -> usize {
        self.transitions.rows() - 2
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.transitions.shape();
        if s.len() != 2 || s[0] != s[1] || s[0] < 2 {
            return Err(Error::shape(
                "crf",
                format!("transitions {s:?} not square over K+2"),
            ));
        }
        Ok(())
    }
}

fn check<S: Scalar>(emissions: &Tensor<S>, transitions: &Tensor<S>) -> Result<usize> {
    let ts = transitions.shape();
    if ts.len() != 2 || ts[0] != ts[1] || ts[0] < 3 {
        return Err(Error::shape("crf", format!("transitions {ts:?}")));
    }
    let k = ts[0] - 2;
    if emissions.shape().len() != 2 || emissions.cols() != k {
        return Err(Error::shape(
            "crf",
            format!("emissions {:?} for {k} tags", emissions.shape()),
        ));
    }
    if emissions.rows() == 0 {
        return Err(Error::Empty("crf"));
    }
    Ok(k)
}

/// Unnormalized score of one tag path.
pub fn path_score<S: Scalar>(emissions: &Tensor<S>, transitions: &Tensor<S>, tags: &[usize]) -> S {
    let k = transitions.rows() - 2;
    let (bos, eos) = (k, k + 1);
    let mut s = transitions.at(bos, tags[0]) + transitions.at(tags[tags.len() - 1], eos);
    for (t, &y) in tags.iter().enumerate() {
        s += emissions.at(t, y);
        if t > 0 {
            s += transitions.at(tags[t - 1], y);
        }
    }
    s
}

fn forward_table<S: Scalar>(
    emissions: &Tensor<S>,
    transitions: &Tensor<S>,
    k: usize,
) -> Vec<Vec<S>> {
    let len = emissions.rows();
    let mut alpha = vec![vec![S::zero(); k]; len];
    for j in 0..k {
        alpha[0][j] = transitions.at(k, j) + emissions.at(0, j);
    }
    let mut buf = vec![S::zero(); k];
    for t in 1..len {
        for j in 0..k {
            for i in 0..k {
                buf[i] = alpha[t - 1][i] + transitions.at(i, j);
            }
            alpha[t][j] = log_sum_exp(&buf) + emissions.at(t, j);
        }
    }
    alpha
}

/// Log partition function via the forward algorithm.
pub fn log_partition<S: Scalar>(emissions: &Tensor<S>, transitions: &Tensor<S>) -> Result<S> {
    let k = check(emissions, transitions)?;
    let alpha = forward_table(emissions, transitions, k);
    let last = &alpha[emissions.rows() - 1];
    let fin: Vec<S> = (0..k).map(|j| last[j] + transitions.at(j, k + 1)).collect();
    Ok(log_sum_exp(&fin))
}

/// `−log P(tags | emissions)`.
pub fn crf_nll<S: Scalar>(
    emissions: &Tensor<S>,
    tags: &[usize],
    params: &CrfParams<S>,
) -> Result<S> {
    crf_nll_forward(emissions, &params.transitions, tags)
}

pub fn crf_nll_forward<S: Scalar>(
    emissions: &Tensor<S>,
    transitions: &Tensor<S>,
    tags: &[usize],
) -> Result<S> {
    let k = check(emissions, transitions)?;
    check_tags(emissions, tags, k)?;
    Ok(log_partition(emissions, transitions)? - path_score(emissions, transitions, tags))
}

fn check_tags<S: Scalar>(emissions: &Tensor<S>, tags: &[usize], k: usize) -> Result<()> {
    if tags.len() != emissions.rows() {
        return Err(Error::shape(
            "crf",
            format!("{} tags for {} positions", tags.len(), emissions.rows()),
        ));
    }
    if let Some(&bad) = tags.iter().find(|&&t| t >= k) {
        return Err(Error::shape("crf", format!("tag {bad} out of range {k}")));
    }
    Ok(())
}

/// Gradients of the NLL: `(d_emissions, d_transitions)`, from forward-backward marginals.
pub fn crf_nll_backward<S: Scalar>(
    emissions: &Tensor<S>,
    transitions: &Tensor<S>,
    tags: &[usize],
) -> Result<(Tensor<S>, Tensor<S>)> {
    let k = check(emissions, transitions)?;
    check_tags(emissions, tags, k)?;
    let len = emissions.rows();
    let (bos, eos) = (k, k + 1);
    let alpha = forward_table(emissions, transitions, k);
    let mut beta = vec![vec![S::zero(); k]; len];
    for i in 0..k {
        beta[len - 1][i] = transitions.at(i, eos);
    }
    let mut buf = vec![S::zero(); k];
    for t in (0..len - 1).rev() {
        for i in 0..k {
            for j in 0..k {
                buf[j] = transitions.at(i, j) + emissions.at(t + 1, j) + beta[t + 1][j];
            }
            beta[t][i] = log_sum_exp(&buf);
        }
    }
    let fin: Vec<S> = (0..k)
        .map(|j| alpha[len - 1][j] + transitions.at(j, eos))
        .collect();
    let log_z = log_sum_exp(&fin);

    let mut d_em = Tensor::zeros(&[len, k]);
    let mut d_tr = Tensor::zeros(&[k + 2, k + 2]);
    for t in 0..len {
        for j in 0..k {
            let p = (alpha[t][j] + beta[t][j] - log_z).exp();
            d_em.set(t, j, p);
        }
    }
    for j in 0..k {
        d_tr.set(bos, j, d_em.at(0, j));
        d_tr.set(j, eos, d_em.at(len - 1, j));
    }
    for t in 1..len {
        for i in 0..k {
            for j in 0..k {
                let p = (alpha[t - 1][i] + transitions.at(i, j) + emissions.at(t, j) + beta[t][j]
                    - log_z)
                    .exp();
                let v = d_tr.at(i, j) + p;
                d_tr.set(i, j, v);
            }
        }
    }
    // Subtract the gold path's feature counts.
    for (t, &y) in tags.iter().enumerate() {
        let v = d_em.at(t, y) - S::one();
        d_em.set(t, y, v);
        if t > 0 {
            let v = d_tr.at(tags[t - 1], y) - S::one();
            d_tr.set(tags[t - 1], y, v);
        }
    }
    let v = d_tr.at(bos, tags[0]) - S::one();
    d_tr.set(bos, tags[0], v);
    let v = d_tr.at(tags[len - 1], eos) - S::one();
    d_tr.set(tags[len - 1], eos, v);
    Ok((d_em, d_tr))
}

/// Most probable tag path. Ties prefer the lower tag index at every decision.
pub fn crf_viterbi<S: Scalar>(emissions: &Tensor<S>, params: &CrfParams<S>) -> Result<Vec<usize>> {
    viterbi(emissions, &params.transitions)
}

pub fn viterbi<S: Scalar>(emissions: &Tensor<S>, transitions: &Tensor<S>) -> Result<Vec<usize>> {
    let k = check(emissions, transitions)?;
    let len = emissions.rows();
    let mut delta: Vec<S> = (0..k)
        .map(|j| transitions.at(k, j) + emissions.at(0, j))
        .collect();
    let mut back = vec![vec![0usize; k]; len];
    for t in 1..len {
        let mut next = vec![S::zero(); k];
        for j in 0..k {
            let mut best = 0;
            let mut best_score = delta[0] + transitions.at(0, j);
            for (i, &d) in delta.iter().enumerate().skip(1) {
                let s = d + transitions.at(i, j);
                if s > best_score {
                    best = i;
                    best_score = s;
                }
            }
            back[t][j] = best;
            next[j] = best_score + emissions.at(t, j);
        }
        delta = next;
    }
    let mut last = 0;
    let mut last_score = delta[0] + transitions.at(0, k + 1);
    for (j, &d) in delta.iter().enumerate().skip(1) {
        let s = d + transitions.at(j, k + 1);
        if s > last_score {
            last = j;
            last_score = s;
        }
    }
    let mut path = vec![0; len];
    path[len - 1] = last;
    for t in (1..len).rev() {
        path[t - 1] = back[t][path[t]];
    }
    Ok(path)
}
