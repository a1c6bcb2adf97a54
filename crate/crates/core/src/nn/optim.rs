//! Named parameter storage, initialization and the Adam optimizer.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Tensor,
    pub v: Tensor,
}

/// Trainable parameters, their Adam moments, and non-trainable buffers
/// (batch-norm running statistics).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    pub params: BTreeMap<String, Tensor>,
    pub moments: BTreeMap<String, Moments>,
    pub buffers: BTreeMap<String, Tensor>,
    pub step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        self.moments.insert(
            name.clone(),
            Moments {
                m: Tensor::zeros(value.shape()),
                v: Tensor::zeros(value.shape()),
            },
        );
        self.params.insert(name, value);
    }

    pub fn insert_buffer(&mut self, name: impl Into<String>, value: Tensor) {
        self.buffers.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name}")))
    }

    pub fn buffer(&self, name: &str) -> Result<&Tensor> {
        self.buffers
            .get(name)
            .ok_or_else(|| Error::invalid(format!("unknown buffer {name}")))
    }

    pub fn buffer_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.buffers
            .get_mut(name)
            .ok_or_else(|| Error::invalid(format!("unknown buffer {name}")))
    }

    pub fn n_parameters(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Resets moments and the step counter.
    pub fn reset_optimizer(&mut self) {
        for (name, p) in &self.params {
            self.moments.insert(
                name.clone(),
                Moments {
                    m: Tensor::zeros(p.shape()),
                    v: Tensor::zeros(p.shape()),
                },
            );
        }
        self.step = 0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 coefficient added to the raw gradient (not decoupled).
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// One bias-corrected Adam update of every parameter in `store`.
/// Parameters absent from `grads` are treated as having zero gradient.
pub fn adam_step(store: &mut ParamStore, grads: &BTreeMap<String, Vec<f64>>, cfg: &AdamConfig) -> Result<()> {
    for (name, g) in grads {
        let p = store.get(name)?;
        if p.len() != g.len() {
            return Err(Error::shape(format!(
                "gradient for {name} has {} values, parameter has {}",
                g.len(),
                p.len()
            )));
        }
    }
    store.step += 1;
    let t = store.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (name, p) in store.params.iter_mut() {
        let mom = store.moments.get_mut(name).expect("moments exist for every parameter");
        let g = grads.get(name);
        let pd = p.data_mut();
        let (md, vd) = (mom.m.data_mut(), mom.v.data_mut());
        for i in 0..pd.len() {
            let gi = g.map_or(0.0, |g| g[i]) + cfg.weight_decay * pd[i];
            md[i] = cfg.beta1 * md[i] + (1.0 - cfg.beta1) * gi;
            vd[i] = cfg.beta2 * vd[i] + (1.0 - cfg.beta2) * gi * gi;
            let mhat = md[i] / bc1;
            let vhat = vd[i] / bc2;
            pd[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// He-uniform weights `U(-√(6/fan_in), √(6/fan_in))` of shape `[fan_in, fan_out]`.
pub fn he_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("consistent shape")
}
