//! Learning-rate and EMA-momentum schedules. Both are pure functions of the
//! 0-based step index so they can be re-evaluated anywhere (training loop,
//! logs, tests) without shared state.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cosine decay with a linear-free warmup: the first `warmup_steps` run at
/// `base_lr` flat, then the rate follows half a cosine from `base_lr` down to
/// zero across the remaining steps.
pub fn cosine_lr(step: usize, total_steps: usize, base_lr: f64, warmup_steps: usize) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::config("train.total_steps", "must be positive"));
    }
    if base_lr < 0.0 {
        return Err(Error::config("train.base_lr", "must be non-negative"));
    }
    let step = step.min(total_steps);
    if step < warmup_steps || warmup_steps >= total_steps {
        return Ok(base_lr);
    }
    let span = (total_steps - warmup_steps) as f64;
    let progress = (step - warmup_steps) as f64 / span;
    Ok(base_lr * 0.5 * (1.0 + (PI * progress).cos()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmaMode {
    /// tau stays at `tau_base` forever.
    Constant,
    /// tau follows a half-cosine from `tau_base` at step 0 up to exactly 1 at
    /// the final step: `tau(s) = 1 - (1 - tau_base) * 0.5 * (1 + cos(pi*s/T))`.
    CosineToOne,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EmaSchedule {
    pub tau_base: f64,
    pub total_steps: usize,
    pub mode: EmaMode,
}

impl EmaSchedule {
    pub fn new(tau_base: f64, total_steps: usize, mode: EmaMode) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau_base) {
            return Err(Error::config("train.tau_base", "must lie in [0, 1]"));
        }
        if total_steps == 0 {
            return Err(Error::config("train.total_steps", "must be positive"));
        }
        Ok(EmaSchedule {
            tau_base,
            total_steps,
            mode,
        })
    }

    /// tau for 0-based `step`; `step = total_steps - 1` is the final step.
    pub fn tau(&self, step: usize) -> f64 {
        match self.mode {
            EmaMode::Constant => self.tau_base,
            EmaMode::CosineToOne => {
                if self.total_steps == 1 {
                    return 1.0;
                }
                let s = step.min(self.total_steps - 1) as f64;
                let horizon = (self.total_steps - 1) as f64;
                1.0 - (1.0 - self.tau_base) * 0.5 * (1.0 + (PI * s / horizon).cos())
            }
        }
    }
}
