//! First-order optimizer: Adam with bias correction and an optional cosine
//! learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// One bias-corrected update in place. `lr_scale` multiplies the base
    /// learning rate (1.0 for a constant schedule).
    ///
    /// With a block-batched loss the gradient of untouched blocks is exactly
    /// zero; their moments still decay, which is the standard behavior.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr_scale: f64) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                context: "adam step",
                expected: self.m.len(),
                got: params.len().min(grad.len()),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let lr_t = self.lr * lr_scale * (1.0 - self.beta2.powi(t)).sqrt()
            / (1.0 - self.beta1.powi(t));
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= lr_t * self.m[i] / (self.v[i].sqrt() + self.epsilon);
        }
        Ok(())
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }
}

/// Cosine decay from 1 at step 0 to `floor` at `total_steps`.
pub fn cosine_scale(step: u64, total_steps: u64, floor: f64) -> f64 {
    if total_steps == 0 {
        return 1.0;
    }
    let x = (step.min(total_steps)) as f64 / total_steps as f64;
    floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * x).cos())
}
