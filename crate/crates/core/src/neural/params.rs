use std::collections::BTreeMap;

use rand::Rng;

use super::Tensor;
use crate::{Error, Result, Scalar};

pub const INIT_RANGE: f64 = 0.08;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named parameters with gradient accumulators and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<S> {
    names: Vec<String>,
    values: Vec<Tensor<S>>,
    grads: Vec<Tensor<S>>,
    first_moment: Vec<Tensor<S>>,
    second_moment: Vec<Tensor<S>>,
    index: BTreeMap<String, ParamId>,
    step: u64,
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            index: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<S>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name:?}")));
        }
        let id = ParamId(self.values.len());
        let zeros = Tensor::zeros(value.shape());
        self.grads.push(zeros.clone());
        self.first_moment.push(zeros.clone());
        self.second_moment.push(zeros);
        self.values.push(value);
        self.index.insert(name.clone(), id);
        self.names.push(name);
        Ok(id)
    }

    /// Uniform(−0.08, 0.08) initialization for weight matrices.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        rng: &mut impl Rng,
    ) -> Result<ParamId> {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| S::of(rng.gen_range(-INIT_RANGE..INIT_RANGE)))
            .collect();
        self.add(name, Tensor::from_vec(shape, data)?)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> Result<ParamId> {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn add_ones(&mut self, name: impl Into<String>, shape: &[usize]) -> Result<ParamId> {
        self.add(name, Tensor::filled(shape, S::one()))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<S> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<S> {
        &self.grads[id.0]
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Adds `scale · grads` into the accumulators.
    pub fn accumulate(&mut self, grads: &Gradients<S>, scale: S) {
        for (slot, g) in self.grads.iter_mut().zip(&grads.slots) {
            if let Some(g) = g {
                slot.add_scaled(g, scale);
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|v| *v = S::zero());
        }
    }

    pub fn grad_norm(&self, id: ParamId) -> S {
        self.grads[id.0].norm()
    }
}

/// Sparse per-parameter gradients produced by one backward pass.
#[derive(Clone, Debug)]
pub struct Gradients<S> {
    slots: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn new(num_params: usize) -> Self {
        Gradients {
            slots: vec![None; num_params],
        }
    }

    pub fn add(&mut self, id: ParamId, g: &Tensor<S>) {
        match &mut self.slots[id.0] {
            Some(acc) => acc.add_assign(g),
            slot @ None => *slot = Some(g.clone()),
        }
    }

    pub fn add_owned(&mut self, id: ParamId, g: Tensor<S>) {
        match &mut self.slots[id.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor<S>> {
        self.slots[id.0].as_ref()
    }

    pub fn merge(&mut self, other: &Gradients<S>) {
        for (i, g) in other.slots.iter().enumerate() {
            if let Some(g) = g {
                self.add(ParamId(i), g);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update from the accumulated gradients, which are then zeroed.
pub fn adam_step<S: Scalar>(store: &mut ParamStore<S>, cfg: &AdamConfig) -> Result<()> {
    for (name, g) in store.names.iter().zip(&store.grads) {
        if !g.all_finite() {
            return Err(Error::NonFinite(format!("gradient of parameter {name}")));
        }
    }
    store.step += 1;
    let t = store.step as i32;
    let (b1, b2) = (S::of(cfg.beta1), S::of(cfg.beta2));
    let c1 = S::one() - b1.powi(t);
    let c2 = S::one() - b2.powi(t);
    let (lr, eps) = (S::of(cfg.lr), S::of(cfg.eps));
    for i in 0..store.values.len() {
        let g = store.grads[i].data();
        let m = store.first_moment[i].data_mut();
        for (m, &g) in m.iter_mut().zip(g) {
            *m = b1 * *m + (S::one() - b1) * g;
        }
        let v = store.second_moment[i].data_mut();
        for (v, &g) in v.iter_mut().zip(g) {
            *v = b2 * *v + (S::one() - b2) * g * g;
        }
        let (m, v) = (store.first_moment[i].data(), store.second_moment[i].data());
        for ((p, &m), &v) in store.values[i].data_mut().iter_mut().zip(m).zip(v) {
            let mhat = m / c1;
            let vhat = v / c2;
            *p -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    store.zero_grad();
    Ok(())
}
