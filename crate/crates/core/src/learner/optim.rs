//! Adam with decoupled weight decay and the linear warmup/decay
//! learning-rate schedule.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::math;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay; 0 at toy scale.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// First/second moment estimates shaped like the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        Self { m: vec![0.0; param_count], v: vec![0.0; param_count], t: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update in place. `params` and `grads` must
    /// match the state's length.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, config: &AdamConfig) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let t = self.t as f64;
        let bc1 = 1.0 - libm_pow(config.beta1, t);
        let bc2 = 1.0 - libm_pow(config.beta2, t);
        for i in 0..params.len() {
            self.m[i] = config.beta1 * self.m[i] + (1.0 - config.beta1) * grads[i];
            self.v[i] = config.beta2 * self.v[i] + (1.0 - config.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (math::sqrt(v_hat) + config.eps);
            if config.weight_decay > 0.0 {
                params[i] -= lr * config.weight_decay * params[i];
            }
        }
    }
}

#[cfg(feature = "std")]
fn libm_pow(base: f64, exp: f64) -> f64 {
    base.powf(exp)
}
#[cfg(not(feature = "std"))]
fn libm_pow(base: f64, exp: f64) -> f64 {
    libm::pow(base, exp)
}

/// Linear warmup to `peak_lr` over the first `warmup_fraction` of
/// training, then linear decay to 0 at `total_steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub peak_lr: f64,
    pub total_steps: u64,
    pub warmup_fraction: f64,
}

impl LrSchedule {
    pub fn new(peak_lr: f64, total_steps: u64) -> Self {
        Self { peak_lr, total_steps, warmup_fraction: 0.1 }
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        let total = self.total_steps as f64;
        let warmup = self.warmup_fraction * total;
        let s = (step as f64).min(total);
        if warmup > 0.0 && s < warmup {
            self.peak_lr * s / warmup
        } else {
            self.peak_lr * (total - s) / (total - warmup)
        }
    }
}
