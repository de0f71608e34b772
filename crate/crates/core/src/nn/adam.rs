use serde::{Deserialize, Serialize};

use super::network::Network;
use crate::error::{FddError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// ADAM moments, one accumulator per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub config: AdamConfig,
}

impl OptimizerState {
    pub fn new(params: &Network, config: AdamConfig) -> Self {
        Self::for_shapes(params.param_slices().iter().map(|s| s.len()), config)
    }

    pub fn for_shapes(lens: impl IntoIterator<Item = usize>, config: AdamConfig) -> Self {
        let (m, v) = lens.into_iter().map(|n| (vec![0.0; n], vec![0.0; n])).unzip();
        OptimizerState { step: 0, m, v, config }
    }
}

/// One bias-corrected ADAM step over matching parameter/gradient slices.
pub fn adam_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut OptimizerState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(FddError::Shape("optimizer, parameter and gradient blocks differ".into()));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(FddError::Shape("optimizer block length mismatch".into()));
        }
    }
    if let Some(pos) = grads.iter().flat_map(|g| g.iter()).position(|x| !x.is_finite()) {
        return Err(FddError::Numeric {
            context: format!("gradient entry {pos}"),
            step: state.step as usize,
        });
    }
    state.step += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for k in 0..p.len() {
            m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
            v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

pub fn adam_update(params: &mut Network, grads: &Network, state: &mut OptimizerState) -> Result<()> {
    let g = grads.param_slices();
    let mut p = params.param_slices_mut();
    adam_step(&mut p, &g, state)
}
