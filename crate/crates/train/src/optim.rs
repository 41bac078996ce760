//! First-order optimizers over flat parameter vectors and the learning-rate
//! schedule.

use serde::{Deserialize, Serialize};

use crate::error::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd {
        #[serde(default = "defaults::sgd_lr")]
        lr: f64,
        #[serde(default = "defaults::momentum")]
        momentum: f64,
        #[serde(default = "defaults::sgd_weight_decay")]
        weight_decay: f64,
    },
    #[serde(rename = "adamw")]
    AdamW {
        #[serde(default = "defaults::adam_lr")]
        lr: f64,
        #[serde(default = "defaults::beta1")]
        beta1: f64,
        #[serde(default = "defaults::beta2")]
        beta2: f64,
        #[serde(default = "defaults::adam_eps")]
        eps: f64,
        #[serde(default = "defaults::adam_weight_decay")]
        weight_decay: f64,
    },
}

pub(crate) mod defaults {
    pub fn sgd_lr() -> f64 {
        0.03
    }
    pub fn momentum() -> f64 {
        0.9
    }
    pub fn sgd_weight_decay() -> f64 {
        5e-4
    }
    pub fn adam_lr() -> f64 {
        1e-3
    }
    pub fn beta1() -> f64 {
        0.9
    }
    pub fn beta2() -> f64 {
        0.999
    }
    pub fn adam_eps() -> f64 {
        1e-8
    }
    pub fn adam_weight_decay() -> f64 {
        1.0
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Sgd {
            lr: defaults::sgd_lr(),
            momentum: defaults::momentum(),
            weight_decay: defaults::sgd_weight_decay(),
        }
    }
}

impl OptimizerConfig {
    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { lr, .. } | OptimizerConfig::AdamW { lr, .. } => lr,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let nonneg = |key: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(TrainError::config(key, format!("{v} must be finite and >= 0")))
            }
        };
        match *self {
            OptimizerConfig::Sgd {
                lr,
                momentum,
                weight_decay,
            } => {
                nonneg("optim.lr", lr)?;
                nonneg("optim.weight_decay", weight_decay)?;
                if !(0.0..1.0).contains(&momentum) {
                    return Err(TrainError::config("optim.momentum", "must lie in [0, 1)"));
                }
            }
            OptimizerConfig::AdamW {
                lr,
                beta1,
                beta2,
                eps,
                weight_decay,
            } => {
                nonneg("optim.lr", lr)?;
                nonneg("optim.weight_decay", weight_decay)?;
                if !(0.0..1.0).contains(&beta1) {
                    return Err(TrainError::config("optim.beta1", "must lie in [0, 1)"));
                }
                if !(0.0..1.0).contains(&beta2) {
                    return Err(TrainError::config("optim.beta2", "must lie in [0, 1)"));
                }
                if !(eps > 0.0) {
                    return Err(TrainError::config("optim.eps", "must be > 0"));
                }
            }
        }
        Ok(())
    }

    pub fn build(&self, params: usize) -> Optimizer {
        match *self {
            OptimizerConfig::Sgd {
                momentum,
                weight_decay,
                ..
            } => Optimizer::Sgd(Sgd::new(params, momentum, weight_decay)),
            OptimizerConfig::AdamW {
                beta1,
                beta2,
                eps,
                weight_decay,
                ..
            } => Optimizer::AdamW(AdamW::new(params, beta1, beta2, eps, weight_decay)),
        }
    }
}

/// SGD with heavy-ball momentum and L2 decay folded into the gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    pub velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(params: usize, momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: vec![0.0; params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<(), TrainError> {
        check_lengths(params.len(), grads.len(), self.velocity.len())?;
        for ((p, &g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            let g = g + self.weight_decay * *p;
            *v = self.momentum * *v + g;
            *p -= lr * *v;
        }
        Ok(())
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamW {
    pub fn new(params: usize, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            weight_decay,
            m: vec![0.0; params],
            v: vec![0.0; params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<(), TrainError> {
        check_lengths(params.len(), grads.len(), self.m.len())?;
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * params[i]);
        }
        Ok(())
    }
}

fn check_lengths(params: usize, grads: usize, state: usize) -> Result<(), TrainError> {
    if params != grads || params != state {
        return Err(TrainError::ShapeMismatch(format!(
            "{params} parameters, {grads} gradients, {state} state entries"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Sgd(Sgd),
    AdamW(AdamW),
}

impl Optimizer {
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<(), TrainError> {
        match self {
            Optimizer::Sgd(o) => o.step(params, grads, lr),
            Optimizer::AdamW(o) => o.step(params, grads, lr),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// `lr₀·cos(7πk / 16K)`.
    #[default]
    Cosine7_16,
    /// `lr₀·(1 + cos(πk/K))/2`.
    HalfCosine,
    Constant,
}

pub fn cosine_lr(step: usize, total: usize, lr0: f64) -> f64 {
    scheduled_lr(Schedule::Cosine7_16, step, total, lr0)
}

pub fn scheduled_lr(schedule: Schedule, step: usize, total: usize, lr0: f64) -> f64 {
    if total == 0 {
        return lr0;
    }
    let frac = step.min(total) as f64 / total as f64;
    match schedule {
        Schedule::Cosine7_16 => lr0 * (7.0 * std::f64::consts::PI * frac / 16.0).cos(),
        Schedule::HalfCosine => lr0 * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos()),
        Schedule::Constant => lr0,
    }
}
