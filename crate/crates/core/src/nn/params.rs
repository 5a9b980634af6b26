use std::collections::BTreeMap;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::real::Real;
use crate::rng::{self, Rng};

/// Handle to an entry of a [`ParamStore`]; stable for the life of the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct ParamEntry<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

/// Named model parameters with paired gradient buffers.
///
/// Entries keep registration order, which fixes the order of every
/// reduction and of the checkpoint blob.
#[derive(Debug, Clone)]
pub struct ParamStore<T = f32> {
    entries: Vec<ParamEntry<T>>,
    index: BTreeMap<String, usize>,
    rng_seed: u64,
    rng: Rng,
}

impl<T: Real> ParamStore<T> {
    pub fn new(rng_seed: u64) -> Self {
        ParamStore {
            entries: Vec::new(),
            index: BTreeMap::new(),
            rng_seed,
            rng: rng::stream(rng_seed, rng::domain::INIT, 0),
        }
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn insert(&mut self, name: &str, value: Tensor<T>) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::Config(format!("parameter `{name}` registered twice")));
        }
        let id = self.entries.len();
        self.entries.push(ParamEntry {
            name: name.to_string(),
            grad: Tensor::zeros(value.shape()),
            value,
        });
        self.index.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    /// Uniform in ±sqrt(6 / (fan_in + fan_out)).
    pub fn insert_glorot(
        &mut self,
        name: &str,
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
    ) -> Result<ParamId> {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| T::lit(self.rng.gen_range(-bound..bound)))
            .collect();
        self.insert(name, Tensor::from_vec(shape, data)?)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index
            .get(name)
            .map(|&i| ParamId(i))
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].grad
    }

    pub fn by_name(&self, name: &str) -> Result<&ParamEntry<T>> {
        Ok(&self.entries[self.id(name)?.0])
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry<T>] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_params(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(T::zero());
        }
    }

    /// Fresh zeroed gradient buffers shaped like this store.
    pub fn gradients(&self) -> Gradients<T> {
        Gradients {
            tensors: self
                .entries
                .iter()
                .map(|e| Tensor::zeros(e.value.shape()))
                .collect(),
        }
    }

    /// `grad += scale * grads`, entry by entry.
    pub fn accumulate(&mut self, grads: &Gradients<T>, scale: T) {
        for (e, g) in self.entries.iter_mut().zip(&grads.tensors) {
            e.grad.add_scaled(g, scale);
        }
    }

    pub fn grads_finite(&self) -> bool {
        self.entries.iter().all(|e| e.grad.all_finite())
    }

    /// Same parameters at another precision (the 64-bit oracle mirror).
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    value: e.value.cast(),
                    grad: e.grad.cast(),
                })
                .collect(),
            index: self.index.clone(),
            rng_seed: self.rng_seed,
            rng: self.rng.clone(),
        }
    }
}

/// Gradient buffers detached from a store, so independent rollouts can
/// accumulate privately and be reduced afterwards in a fixed order.
#[derive(Debug, Clone)]
pub struct Gradients<T = f32> {
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn add(&mut self, other: &Gradients<T>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_scaled(b, T::one());
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Flattened view in entry order.
    pub fn flatten(&self) -> Vec<T> {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }
}
