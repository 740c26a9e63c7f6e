use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [("optim.beta1", self.beta1), ("optim.beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(key, format!("{v} outside [0, 1)")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("optim.eps", "must be > 0"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("optim.weight_decay", "must be ≥ 0"));
        }
        Ok(())
    }
}

/// First/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: ParamSet,
    pub v: ParamSet,
}

impl OptimizerState {
    pub fn new(config: AdamWConfig, params: &ParamSet) -> Self {
        OptimizerState {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// One AdamW update with decoupled weight decay:
///
/// `θ ← θ·(1 − lr·λ) − lr · m̂ / (√v̂ + ε)`
///
/// Non-finite gradients reject the whole step and leave everything untouched.
pub fn adamw_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut OptimizerState,
    lr: f64,
) -> Result<()> {
    params.check_layout(grads)?;
    params.check_layout(&state.m)?;
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("learning rate {lr}")));
    }
    for g in grads.iter() {
        if let Some((index, &value)) = g.data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteGradient {
                param: g.name.clone(),
                index,
                value,
            });
        }
    }

    let AdamWConfig {
        beta1,
        beta2,
        eps,
        weight_decay,
    } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    let decay = 1.0 - lr * weight_decay;

    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for i in 0..p.data.len() {
            let gi = g.data[i];
            m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * gi;
            v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * gi * gi;
            let m_hat = m.data[i] / bc1;
            let v_hat = v.data[i] / bc2;
            p.data[i] = p.data[i] * decay - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Param;

    fn scalar(v: f64) -> ParamSet {
        ParamSet::new(vec![Param {
            name: "theta".into(),
            shape: vec![1],
            data: vec![v],
        }])
    }

    fn value(p: &ParamSet) -> f64 {
        p.iter().next().unwrap().data[0]
    }

    #[test]
    fn zero_gradient_no_decay_is_fixed_point() {
        let mut p = scalar(1.7);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut st = OptimizerState::new(cfg, &p);
        for _ in 0..5 {
            adamw_step(&mut p, &scalar(0.0), &mut st, 0.1).unwrap();
        }
        assert_eq!(value(&p), 1.7);
        assert_eq!(st.step, 5);
    }

    #[test]
    fn first_step_hand_evaluated() {
        let mut p = scalar(1.0);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            eps: 1e-8,
            ..Default::default()
        };
        let mut st = OptimizerState::new(cfg, &p);
        adamw_step(&mut p, &scalar(1.0), &mut st, 0.1).unwrap();
        // m̂ = 1, v̂ = 1
        let expect = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8));
        assert!((value(&p) - expect).abs() < 1e-15);
        assert!((value(&p) - 0.9).abs() < 1e-8);
    }

    #[test]
    fn decoupled_decay_only() {
        let mut p = scalar(2.5);
        let mut st = OptimizerState::new(AdamWConfig::default(), &p);
        adamw_step(&mut p, &scalar(0.0), &mut st, 0.1).unwrap();
        assert_eq!(value(&p), 2.5 * (1.0 - 0.1 * 0.01));
    }

    #[test]
    fn non_finite_gradient_rejected_without_side_effects() {
        let mut p = scalar(1.0);
        let mut st = OptimizerState::new(AdamWConfig::default(), &p);
        let err = adamw_step(&mut p, &scalar(f64::NAN), &mut st, 0.1).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { index: 0, .. }));
        assert_eq!(value(&p), 1.0);
        assert_eq!(st.step, 0);
    }

    #[test]
    fn first_step_magnitude_is_scale_free() {
        for g in [1e-3, 1.0, 1e3] {
            let mut p = scalar(0.0);
            let cfg = AdamWConfig {
                weight_decay: 0.0,
                eps: 1e-12,
                ..Default::default()
            };
            let mut st = OptimizerState::new(cfg, &p);
            adamw_step(&mut p, &scalar(g), &mut st, 0.01).unwrap();
            assert!((value(&p).abs() - 0.01).abs() <= 0.01 * 0.01, "g={g}");
        }
    }

    #[test]
    fn second_moment_nonnegative() {
        let mut p = scalar(0.3);
        let mut st = OptimizerState::new(AdamWConfig::default(), &p);
        for g in [-3.0, 2.0, -0.5, 0.0] {
            adamw_step(&mut p, &scalar(g), &mut st, 0.01).unwrap();
            assert!(value(&st.v) >= 0.0);
        }
    }
}
