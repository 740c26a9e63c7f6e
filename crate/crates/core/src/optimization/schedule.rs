use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub base_lr: f64,
    pub total_iters: u64,
    pub power: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            base_lr: 6e-5,
            total_iters: 96_000,
            power: 0.9,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::config("schedule.base_lr", "must be > 0"));
        }
        if self.total_iters == 0 {
            return Err(Error::config("schedule.total_iters", "must be > 0"));
        }
        if !(self.power > 0.0 && self.power.is_finite()) {
            return Err(Error::config("schedule.power", "must be > 0"));
        }
        Ok(())
    }
}

/// `base_lr · (1 − t/T)^power` for `0 ≤ t ≤ T`.
pub fn poly_lr(t: u64, cfg: &ScheduleConfig) -> Result<f64> {
    if t > cfg.total_iters {
        return Err(Error::InvalidArgument(format!(
            "iteration {t} beyond schedule end {}",
            cfg.total_iters
        )));
    }
    let remaining = 1.0 - t as f64 / cfg.total_iters as f64;
    Ok(cfg.base_lr * remaining.powf(cfg.power))
}
