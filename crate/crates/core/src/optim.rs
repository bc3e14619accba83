//! Adam with bias correction. Moments are kept in 64-bit.

use crate::error::{Error, Result};
use crate::nn::ParamSet;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.0002,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    /// One bias-corrected update of a single coordinate at step `t >= 1`.
    /// Updates the moments in place and returns the signed parameter change.
    pub fn update(&self, m: &mut f64, v: &mut f64, grad: f64, t: u64) -> f64 {
        *m = self.beta1 * *m + (1.0 - self.beta1) * grad;
        *v = self.beta2 * *v + (1.0 - self.beta2) * grad * grad;
        let m_hat = *m / (1.0 - self.beta1.powi(t as i32));
        let v_hat = *v / (1.0 - self.beta2.powi(t as i32));
        -self.lr * m_hat / (v_hat.sqrt() + self.eps)
    }
}

/// Optimizer state for one [`ParamSet`]: per-parameter moment buffers and the
/// step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        Adam {
            config,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.value.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.value.numel()]).collect(),
        }
    }

    /// Rebuilds state from saved buffers (e.g. a checkpoint).
    pub fn from_parts(config: AdamConfig, step: u64, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>) -> Result<Self> {
        if m.len() != v.len() || m.iter().zip(&v).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::Contract("adam moment buffers differ in shape".into()));
        }
        Ok(Adam { config, step, m, v })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// Applies one update to every trainable parameter using its gradient.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::Contract(format!(
                "optimizer tracks {} parameters, set has {}",
                self.m.len(),
                params.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if p.value.requires_grad() && p.value.grad().is_none() {
                return Err(Error::Contract(format!("parameter '{}' has no gradient", p.name)));
            }
            if self.m[i].len() != p.value.numel() {
                return Err(Error::Contract(format!("parameter '{}' changed size", p.name)));
            }
        }
        self.step += 1;
        let t = self.step;
        for (i, p) in params.iter_mut().enumerate() {
            if !p.value.requires_grad() {
                continue;
            }
            let grad = p.value.grad().expect("checked above").to_vec();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, theta) in p.value.data_mut().iter_mut().enumerate() {
                let delta = self.config.update(&mut m[j], &mut v[j], grad[j] as f64, t);
                *theta = (*theta as f64 + delta) as f32;
            }
        }
        Ok(())
    }
}

/// Zeroes every gradient buffer, allocating zeros for trainable parameters
/// that have none yet.
pub fn zero_grad(params: &mut ParamSet) {
    for p in params.iter_mut() {
        if p.value.requires_grad() {
            match p.value.grad_mut() {
                Some(g) => g.fill(0.0),
                None => {
                    let zeros = vec![0.0; p.value.numel()];
                    p.value.accumulate_grad(&zeros);
                }
            }
        }
    }
}
