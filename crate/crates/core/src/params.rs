//! Named parameter and buffer storage shared by every model family.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autograd::{Graph, StatUpdate, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BufferId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Trainable tensors with their gradients, plus non-trainable buffers
/// (batch-norm running statistics).
#[derive(Debug, Clone)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    grads: Vec<Tensor<T>>,
    buffer_names: Vec<String>,
    buffers: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            buffer_names: Vec::new(),
            buffers: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.grads.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        self.names.push(name);
        ParamId(self.values.len() - 1)
    }

    /// Normal(0, sqrt(2 / fan_in)) initialization.
    pub fn add_he(&mut self, name: impl Into<String>, shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> ParamId {
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::from_f64_lossy(normal.sample(rng))).collect();
        self.add(name, Tensor::from_parts(shape.to_vec(), data))
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Tensor<T>) -> BufferId {
        self.buffer_names.push(name.into());
        self.buffers.push(value);
        BufferId(self.buffers.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.grads[id.0]
    }

    #[cfg(test)]
    pub(crate) fn grad_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.grads[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn buffer(&self, id: BufferId) -> &Tensor<T> {
        &self.buffers[id.0]
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.buffer_names.iter().map(String::as_str).zip(&self.buffers)
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Parameter values and gradients, for optimizers.
    pub(crate) fn values_and_grads_mut(&mut self) -> impl Iterator<Item = (&mut Tensor<T>, &Tensor<T>)> {
        self.values.iter_mut().zip(&self.grads)
    }

    pub fn param_count(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    /// Copies every parameter into `g` as a gradient-tracking leaf.
    pub fn bind(&self, g: &mut Graph<T>) -> Vec<Var> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| g.param_leaf(v.clone(), ParamId(i)))
            .collect()
    }

    /// Adds the gradients of param-bound leaves in `g` to the stored gradients.
    pub fn accumulate_grads(&mut self, g: &Graph<T>) {
        for (id, grad) in g.param_grads() {
            self.grads[id.0].add_assign(grad);
        }
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(Tensor::fill_zero);
    }

    /// Folds train-mode batch statistics into running estimates by EMA.
    pub fn apply_stat_updates(&mut self, updates: &[StatUpdate<T>]) {
        for u in updates {
            let m = T::from_f64_lossy(u.momentum);
            let keep = T::one() - m;
            for (r, &b) in self.buffers[u.mean_buffer.0].data_mut().iter_mut().zip(&u.batch_mean) {
                *r = keep * *r + m * b;
            }
            for (r, &b) in self.buffers[u.var_buffer.0].data_mut().iter_mut().zip(&u.batch_var) {
                *r = keep * *r + m * b;
            }
        }
    }

    /// Overwrites a parameter or buffer by name, checking the shape.
    pub fn set_named(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let slot = if let Some(i) = self.names.iter().position(|n| n == name) {
            &mut self.values[i]
        } else if let Some(i) = self.buffer_names.iter().position(|n| n == name) {
            &mut self.buffers[i]
        } else {
            return Err(Error::Checkpoint(format!("unknown tensor {name}")));
        };
        if slot.shape() != value.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor {name} has shape {:?}, model expects {:?}",
                value.shape(),
                slot.shape()
            )));
        }
        *slot = value;
        Ok(())
    }
}
