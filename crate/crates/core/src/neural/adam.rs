use alloc::vec;
use alloc::vec::Vec;

use super::ParameterSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        AdamConfig { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParameterSet, config: AdamConfig) -> Self {
        let n = params.params.len();
        AdamState { config, m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut ParameterSet, grads: &[f64], state: &mut AdamState) -> Result<()> {
    let n = params.params.len();
    if grads.len() != n || state.m.len() != n {
        return Err(Error::Shape(alloc::format!(
            "{} gradients for {} parameters (optimizer sized {})",
            grads.len(),
            n,
            state.m.len()
        )));
    }
    let AdamConfig { learning_rate, beta1, beta2, epsilon } = state.config;
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - libm::pow(beta1, t);
    let c2 = 1.0 - libm::pow(beta2, t);
    let moments = state.m.iter_mut().zip(state.v.iter_mut());
    for ((p, &g), (m, v)) in params.params.iter_mut().zip(grads).zip(moments) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= learning_rate * m_hat / (libm::sqrt(v_hat) + epsilon);
    }
    params.bump_version();
    Ok(())
}
