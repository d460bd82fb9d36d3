//! AdamW with decoupled weight decay, and learning-rate schedules.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    /// Linear warmup to the peak rate, then cosine decay to zero.
    CosineWarmup,
    Constant,
}

/// Learning rate for the 0-based step `step` of a `total_steps` run.
pub fn learning_rate_at(
    schedule: LrSchedule,
    peak: f64,
    step: usize,
    total_steps: usize,
    warmup_steps: usize,
) -> f64 {
    match schedule {
        LrSchedule::Constant => peak,
        LrSchedule::CosineWarmup => {
            if step < warmup_steps {
                peak * (step + 1) as f64 / warmup_steps as f64
            } else {
                let decay_steps = total_steps.saturating_sub(warmup_steps).max(1);
                let progress = ((step - warmup_steps) as f64 / decay_steps as f64).min(1.0);
                peak * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Moment state for a fixed list of parameter tensors.
#[derive(Debug, Clone)]
pub struct AdamW {
    config: AdamWConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    t: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig, sizes: &[usize]) -> Self {
        Self {
            config,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    /// One update. `params[i].1` selects whether tensor `i` is decayed.
    pub fn step(&mut self, params: &mut [(&mut [f64], bool)], grads: &[&[f64]], lr: f64) {
        assert_eq!(params.len(), self.first.len(), "tensor count changed");
        self.t += 1;
        let c = self.config;
        let bias1 = 1.0 - c.beta1.powi(self.t as i32);
        let bias2 = 1.0 - c.beta2.powi(self.t as i32);
        for (i, (p, decay)) in params.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.first[i], &mut self.second[i], grads[i]);
            for j in 0..p.len() {
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
                let update = (m[j] / bias1) / ((v[j] / bias2).sqrt() + c.eps);
                let wd = if *decay { c.weight_decay * p[j] } else { 0.0 };
                p[j] -= lr * (update + wd);
            }
        }
    }
}
