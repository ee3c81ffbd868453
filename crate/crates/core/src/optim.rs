//! Adam with bias correction and L2 weight decay.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Added to the gradient as `weight_decay * theta`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-6,
        }
    }
}

/// Moment estimates for every parameter of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub first: BTreeMap<String, Tensor<T>>,
    pub second: BTreeMap<String, Tensor<T>>,
}

impl<T: Element> AdamState<T> {
    /// Zero moments shaped like `params`.
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Result<Self> {
        let zeros = || -> Result<BTreeMap<String, Tensor<T>>> {
            params
                .params()
                .iter()
                .map(|(k, t)| Ok((k.clone(), Tensor::zeros(t.shape())?)))
                .collect()
        };
        Ok(Self {
            config,
            step: 0,
            first: zeros()?,
            second: zeros()?,
        })
    }

    /// One Adam update of every parameter in `params` from `grads`.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &BTreeMap<String, Tensor<T>>) -> Result<()> {
        for (name, p) in params.params() {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::InvalidArgument(format!("no gradient for {name}")))?;
            let m = self.first.get(name);
            if g.shape() != p.shape() || m.map(Tensor::shape) != Some(p.shape()) {
                return Err(Error::Shape(format!(
                    "parameter {name} {:?} vs gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = T::lit(1.0 - c.beta1.powi(t));
        let bc2 = T::lit(1.0 - c.beta2.powi(t));
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (lr, eps, wd) = (T::lit(c.lr), T::lit(c.eps), T::lit(c.weight_decay));
        for (name, p) in params.params_mut() {
            let g = &grads[name];
            let m = self.first.get_mut(name).map(Tensor::data_mut).unwrap_or_default();
            let v = self.second.get_mut(name).map(Tensor::data_mut).unwrap_or_default();
            for (((theta, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                let g = g + wd * *theta;
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step<T: Element>(
    state: &mut AdamState<T>,
    params: &mut ParamStore<T>,
    grads: &BTreeMap<String, Tensor<T>>,
) -> Result<()> {
    state.step(params, grads)
}
