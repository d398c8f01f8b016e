//! Adam with bias-corrected moment estimates.

use serde::{Deserialize, Serialize};

use crate::gru::GruParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: GruParams,
    pub v: GruParams,
}

impl AdamState {
    pub fn new(params: &GruParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// In-place update; `step_index` starts at 1.
    pub fn update(&mut self, params: &mut GruParams, grads: &GruParams, config: &AdamConfig, step_index: u64) {
        assert!(step_index >= 1, "Adam step index starts at 1");
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = *config;
        let t = step_index.min(i32::MAX as u64) as i32;
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);

        let p_tensors = params.tensors_mut();
        let m_tensors = self.m.tensors_mut();
        let v_tensors = self.v.tensors_mut();
        for (((p, g), m), v) in p_tensors.into_iter().zip(grads.tensors()).zip(m_tensors).zip(v_tensors) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Pure form of [`AdamState::update`].
pub fn adam_step(
    params: &GruParams,
    grads: &GruParams,
    state: &AdamState,
    config: &AdamConfig,
    step_index: u64,
) -> (GruParams, AdamState) {
    let mut params = params.clone();
    let mut state = state.clone();
    state.update(&mut params, grads, config, step_index);
    (params, state)
}
