use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-4,
        }
    }
}

/// First/second moment accumulators over the flattened parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(cfg: &ModelConfig) -> AdamState {
        AdamState {
            m: vec![0.0; cfg.param_count()],
            v: vec![0.0; cfg.param_count()],
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam step with decoupled weight decay applied first:
/// p ← p − lr·wd·p, then the standard moment update.
pub fn adam_step(
    state: &mut AdamState,
    params: &ModelParams,
    grads: &ModelParams,
    cfg: &ModelConfig,
    hy: &AdamHyper,
) -> Result<ModelParams> {
    let mut p = params.flatten();
    let g = grads.flatten();
    if p.len() != state.m.len() || g.len() != state.m.len() {
        return Err(Error::DimensionMismatch(format!(
            "params {}, grads {}, optimizer state {}",
            p.len(),
            g.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let bc1 = 1.0 - hy.beta1.powi(state.t as i32);
    let bc2 = 1.0 - hy.beta2.powi(state.t as i32);
    for i in 0..p.len() {
        p[i] -= hy.lr * hy.weight_decay * p[i];
        state.m[i] = hy.beta1 * state.m[i] + (1.0 - hy.beta1) * g[i];
        state.v[i] = hy.beta2 * state.v[i] + (1.0 - hy.beta2) * g[i] * g[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        p[i] -= hy.lr * m_hat / (v_hat.sqrt() + hy.eps);
    }
    ModelParams::unflatten(cfg, &p)
}
