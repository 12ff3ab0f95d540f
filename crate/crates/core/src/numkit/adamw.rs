//! Decoupled-weight-decay Adam with one learning rate per parameter group.

use serde::{Deserialize, Serialize};

use super::params::{ParamGroup, ParamSet};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr_forward: f64,
    pub lr_backward: f64,
    pub lr_log_z: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Applied to network weights only; `log_z` is never decayed.
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr_forward: 1e-2,
            lr_backward: 1e-2,
            lr_log_z: 5e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamWConfig {
    pub fn lr(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Forward => self.lr_forward,
            ParamGroup::Backward => self.lr_backward,
            ParamGroup::LogZ => self.lr_log_z,
        }
    }

    /// Copy with every learning rate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        AdamWConfig {
            lr_forward: self.lr_forward * factor,
            lr_backward: self.lr_backward * factor,
            lr_log_z: self.lr_log_z * factor,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, lr) in [
            ("lr_pf", self.lr_forward),
            ("lr_pb", self.lr_backward),
            ("lr_log_z", self.lr_log_z),
        ] {
            if !(lr >= 0.0) || !lr.is_finite() {
                return Err(Error::config(format!("train.{name}"), format!("learning rate must be >= 0, got {lr}")));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("train.beta1", "betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("train.adam_eps", "eps must be > 0"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("train.weight_decay", "weight decay must be >= 0"));
        }
        Ok(())
    }
}

/// One AdamW update using the gradients currently stored in `params`.
///
/// Increments the step counter and zeroes the gradients afterwards.
pub fn adamw_step(params: &mut ParamSet, cfg: &AdamWConfig) -> Result<()> {
    cfg.validate()?;
    let t = params.bump_step() as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for p in params.params_mut() {
        let lr = cfg.lr(p.group);
        let decay = if p.group == ParamGroup::LogZ { 0.0 } else { cfg.weight_decay };
        let width = p.shape.get(1).copied().unwrap_or(1);
        for &r in &p.pinned_rows {
            p.grad[r * width..(r + 1) * width].fill(0.0);
        }
        for i in 0..p.value.len() {
            let g = p.grad[i];
            let mut w = p.value[i];
            if decay != 0.0 {
                w -= lr * decay * w;
            }
            let m = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
            let v = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
            p.m[i] = m;
            p.v[i] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            w -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
            p.value[i] = w;
        }
        p.grad.fill(0.0);
    }
    if cfg!(debug_assertions) {
        params.check_finite()?;
    }
    Ok(())
}
