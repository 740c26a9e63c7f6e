//! AdamW, the poly learning-rate schedule and the parameter EMA.

mod adamw;
mod ema;
mod schedule;

pub use adamw::{adamw_step, AdamWConfig, OptimizerState};
pub use ema::{EmaConfig, EmaState};
pub use schedule::{poly_lr, ScheduleConfig};
