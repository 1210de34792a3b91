use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ParamStore, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected adaptive-moment update, in place.
pub fn adam_step(param: &mut [f64], grad: &[f64], state: &mut AdamState, cfg: &AdamConfig) {
    debug_assert_eq!(param.len(), grad.len());
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..param.len() {
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        param[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// Adam over a named subset of a [`ParamStore`]. Parameters outside the
/// subset are frozen: their gradients may be computed but are never applied.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    trainable: Vec<String>,
    states: BTreeMap<String, AdamState>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, trainable: Vec<String>) -> Self {
        Self {
            cfg,
            trainable,
            states: BTreeMap::new(),
        }
    }

    pub fn trainable(&self) -> &[String] {
        &self.trainable
    }

    /// Applies the gradient buffers currently stored on the parameters.
    /// A trainable parameter without a gradient buffer is left unchanged.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        for name in &self.trainable {
            let p = store.get_mut(name)?;
            let Some(grad) = p.grad().map(<[f64]>::to_vec) else { continue };
            let state = self
                .states
                .entry(name.clone())
                .or_insert_with(|| AdamState::new(grad.len()));
            adam_step(p.data_mut(), &grad, state, &self.cfg);
        }
        Ok(())
    }
}
