//! Optimizers and learning-rate schedules.

use std::f64::consts::PI;

use super::{Gradients, ParamStore};

pub struct Sgd;

impl Sgd {
    pub fn step(store: &mut ParamStore, grads: &Gradients, lr: f64) {
        for (i, g) in grads.0.iter().enumerate() {
            let values = store.values_mut(super::ParamId(i));
            for (v, gi) in values.iter_mut().zip(g) {
                *v -= lr * gi;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Adam {
        let zeros: Vec<Vec<f64>> = store.iter().map(|p| vec![0.0; p.values.len()]).collect();
        Adam { config, m: zeros.clone(), v: zeros, t: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, lr: f64) {
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (i, g) in grads.0.iter().enumerate() {
            let values = store.values_mut(super::ParamId(i));
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for k in 0..g.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                values[k] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// Cosine decay from `base_lr` at iteration 0 to zero at `total_iters`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineSchedule {
    pub base_lr: f64,
    pub total_iters: u64,
}

impl CosineSchedule {
    pub fn new(base_lr: f64, total_iters: u64) -> CosineSchedule {
        CosineSchedule { base_lr, total_iters }
    }

    pub fn lr(&self, iter: u64) -> f64 {
        if self.total_iters == 0 {
            return self.base_lr;
        }
        let frac = iter.min(self.total_iters) as f64 / self.total_iters as f64;
        0.5 * self.base_lr * (1.0 + (PI * frac).cos())
    }
}
