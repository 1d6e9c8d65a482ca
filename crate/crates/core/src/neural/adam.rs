use serde::{Deserialize, Serialize};

use super::NeuralError;
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Moment estimates for bias-corrected Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S: Scalar> {
    pub config: AdamConfig,
    pub m: Vec<S>,
    pub v: Vec<S>,
    pub step_count: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(config: AdamConfig, param_count: usize) -> Self {
        AdamState { config, m: vec![S::zero(); param_count], v: vec![S::zero(); param_count], step_count: 0 }
    }

    pub fn step(&mut self, params: &mut [S], grads: &[S]) -> Result<(), NeuralError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NeuralError::ParamDim { expected: self.m.len(), got: params.len().min(grads.len()) });
        }
        self.step_count += 1;
        let c = &self.config;
        let t = self.step_count as i32;
        let (b1, b2) = (S::of(c.beta1), S::of(c.beta2));
        let bc1 = S::one() - S::of(c.beta1.powi(t));
        let bc2 = S::one() - S::of(c.beta2.powi(t));
        let (lr, eps) = (S::of(c.learning_rate), S::of(c.epsilon));
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (S::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (S::one() - b2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}
