use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmaConfig {
    pub alpha: f64,
}

impl Default for EmaConfig {
    fn default() -> Self {
        EmaConfig { alpha: 0.999 }
    }
}

impl EmaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("ema.alpha", format!("{} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

/// Exponential moving average of the trainable parameters,
/// `θ_ema ← α·θ_ema + (1−α)·θ`.
///
/// The shadow is created as a copy of the live parameters at the first
/// update (or explicitly via [`EmaState::from_params`]).
#[derive(Debug, Clone, PartialEq)]
pub struct EmaState {
    alpha: f64,
    shadow: Option<ParamSet>,
    updates: u64,
}

impl EmaState {
    pub fn new(alpha: f64) -> Result<Self> {
        EmaConfig { alpha }.validate()?;
        Ok(EmaState {
            alpha,
            shadow: None,
            updates: 0,
        })
    }

    pub fn from_params(alpha: f64, params: &ParamSet) -> Result<Self> {
        let mut ema = Self::new(alpha)?;
        ema.shadow = Some(params.clone());
        Ok(ema)
    }

    /// Rebuilds a state from serialized parts.
    pub fn from_parts(alpha: f64, shadow: Option<ParamSet>, updates: u64) -> Result<Self> {
        let mut ema = Self::new(alpha)?;
        ema.shadow = shadow;
        ema.updates = updates;
        Ok(ema)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn is_initialized(&self) -> bool {
        self.shadow.is_some()
    }

    pub fn shadow(&self) -> Option<&ParamSet> {
        self.shadow.as_ref()
    }

    pub fn update(&mut self, params: &ParamSet) -> Result<()> {
        match &mut self.shadow {
            None => self.shadow = Some(params.clone()),
            Some(shadow) => {
                shadow.check_layout(params)?;
                let a = self.alpha;
                for (s, p) in shadow.iter_mut().zip(params.iter()) {
                    for (e, &v) in s.data.iter_mut().zip(&p.data) {
                        *e = a * *e + (1.0 - a) * v;
                    }
                }
            }
        }
        self.updates += 1;
        Ok(())
    }

    /// Independent copy of the averaged parameters.
    pub fn snapshot(&self) -> Result<ParamSet> {
        self.shadow.clone().ok_or(Error::EmaUninitialized)
    }
}
