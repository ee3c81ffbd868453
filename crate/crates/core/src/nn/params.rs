//! Named parameter storage and binding onto a tape.

use std::collections::BTreeMap;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::ops::RunningStats;
use crate::tensor::{Element, Tensor};

/// Trainable tensors plus non-trainable buffers (batch-norm running
/// statistics), both keyed by dotted names.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    params: BTreeMap<String, Tensor<T>>,
    buffers: BTreeMap<String, Tensor<T>>,
}

impl<T: Element> Default for ParamStore<T> {
    fn default() -> Self {
        Self {
            params: BTreeMap::new(),
            buffers: BTreeMap::new(),
        }
    }
}

impl<T: Element> ParamStore<T> {
    pub fn insert_param(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.params.insert(name.into(), t);
    }

    pub fn insert_buffer(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.buffers.insert(name.into(), t);
    }

    pub fn param(&self, name: &str) -> Result<&Tensor<T>> {
        self.params
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {name}")))
    }

    pub fn param_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {name}")))
    }

    pub fn buffer(&self, name: &str) -> Result<&Tensor<T>> {
        self.buffers
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown buffer {name}")))
    }

    pub fn buffer_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.buffers
            .get_mut(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown buffer {name}")))
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor<T>> {
        &self.params
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.params.iter_mut()
    }

    pub fn buffers(&self) -> &BTreeMap<String, Tensor<T>> {
        &self.buffers
    }

    /// Number of trainable scalars.
    pub fn count(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Trainable scalars whose name starts with `prefix`.
    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.params
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, t)| t.len())
            .sum()
    }

    pub fn running_stats(&self, bn: &str) -> Result<RunningStats<T>> {
        Ok(RunningStats {
            mean: self.buffer(&format!("{bn}.running_mean"))?.data().to_vec(),
            var: self.buffer(&format!("{bn}.running_var"))?.data().to_vec(),
        })
    }

    pub fn set_running_stats(&mut self, bn: &str, stats: &RunningStats<T>) -> Result<()> {
        for (suffix, v) in [("running_mean", &stats.mean), ("running_var", &stats.var)] {
            let name = format!("{bn}.{suffix}");
            let t = self
                .buffers
                .get_mut(&name)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown buffer {name}")))?;
            t.data_mut().copy_from_slice(v);
        }
        Ok(())
    }

    /// Records every parameter on `tape`, as trainable leaves or as constants.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|(k, t)| {
                let v = if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                };
                (k.clone(), v)
            })
            .collect();
        Bound { vars }
    }

    /// Replaces every tensor with zeros of the same shape.
    pub fn zero_params(&mut self) {
        for t in self.params.values_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn cast<U: Element>(&self) -> ParamStore<U> {
        ParamStore {
            params: self.params.iter().map(|(k, t)| (k.clone(), t.cast())).collect(),
            buffers: self.buffers.iter().map(|(k, t)| (k.clone(), t.cast())).collect(),
        }
    }
}

/// Tape handles for a bound [`ParamStore`].
#[derive(Debug, Clone, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn insert(&mut self, name: impl Into<String>, v: Var) {
        self.vars.insert(name.into(), v);
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("parameter {name} is not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    /// Gradients of every bound parameter; parameters the backward pass did
    /// not reach get zeros.
    pub fn grads<T: Element>(&self, tape: &Tape<T>) -> Result<BTreeMap<String, Tensor<T>>> {
        self.vars
            .iter()
            .map(|(k, &v)| {
                let g = match tape.grad(v) {
                    Some(g) => g.clone(),
                    None => Tensor::zeros(tape.shape(v))?,
                };
                Ok((k.clone(), g))
            })
            .collect()
    }
}
