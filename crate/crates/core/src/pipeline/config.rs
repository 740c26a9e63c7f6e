//! Pipeline configuration: documented defaults, a TOML file and dotted
//! `key=value` overrides, applied in that order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::augmentation::{GeometricConfig, PhotometricConfig};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::optimization::{AdamWConfig, EmaConfig, ScheduleConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Dataset roots concatenated in order; each holds `images/` and `labels/`.
    pub train_roots: Vec<String>,
    pub val_roots: Vec<String>,
    /// 64→9 table; empty selects the built-in GOOSE default.
    pub mapping: String,
    /// Labels on disk carry raw 64-class ids and are remapped on load.
    pub labels_raw: bool,
    /// Parallel augmentation workers; results do not depend on this.
    pub num_workers: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train_roots: Vec::new(),
            val_roots: Vec::new(),
            mapping: String::new(),
            labels_raw: true,
            num_workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct AugmentConfig {
    pub photometric: PhotometricConfig,
    pub geometric: GeometricConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub grad_accumulation_steps: usize,
    pub eval_interval: u64,
    pub checkpoint_interval: u64,
    /// Runs forward/backward on `f32`-rounded weights and inputs; master
    /// weights, optimizer state and EMA stay in `f64`.
    pub mixed_precision: bool,
    /// Checkpoint to continue from; empty starts fresh.
    pub resume_from: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 2,
            grad_accumulation_steps: 4,
            eval_interval: 8000,
            checkpoint_interval: 8000,
            mixed_precision: false,
            resume_from: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Colors for rendered masks, one per class.
    pub palette: Vec<[u8; 3]>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            palette: vec![
                [128, 128, 128],
                [220, 20, 60],
                [128, 64, 128],
                [140, 100, 40],
                [255, 165, 0],
                [0, 0, 142],
                [107, 142, 35],
                [255, 0, 255],
                [70, 130, 180],
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output_dir: String,
    pub data: DataConfig,
    pub augment: AugmentConfig,
    pub model: ModelConfig,
    pub optim: AdamWConfig,
    pub schedule: ScheduleConfig,
    pub ema: EmaConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            output_dir: "runs/default".into(),
            data: DataConfig::default(),
            augment: AugmentConfig::default(),
            model: ModelConfig::default(),
            optim: AdamWConfig::default(),
            schedule: ScheduleConfig::default(),
            ema: EmaConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn effective_batch(&self) -> usize {
        self.train.batch_size * self.train.grad_accumulation_steps
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed > i64::MAX as u64 {
            return Err(Error::config("seed", "must fit in a signed 64-bit integer"));
        }
        self.augment.photometric.validate()?;
        self.augment.geometric.validate()?;
        self.model.validate()?;
        self.optim.validate()?;
        // zero iterations is allowed: initialize, checkpoint, stop
        if self.schedule.total_iters > 0 {
            self.schedule.validate()?;
        }
        self.ema.validate()?;
        let t = &self.train;
        for (key, v) in [
            ("train.batch_size", t.batch_size as u64),
            ("train.grad_accumulation_steps", t.grad_accumulation_steps as u64),
            ("train.eval_interval", t.eval_interval),
            ("train.checkpoint_interval", t.checkpoint_interval),
            ("data.num_workers", self.data.num_workers as u64),
        ] {
            if v == 0 {
                return Err(Error::config(key, "must be > 0"));
            }
        }
        if self.eval.palette.len() < self.model.num_classes {
            return Err(Error::config(
                "eval.palette",
                format!("needs {} colors", self.model.num_classes),
            ));
        }
        let [ch, cw] = self.augment.geometric.crop_size;
        if ch % 32 != 0 || cw % 32 != 0 {
            return Err(Error::config(
                "augment.geometric.crop_size",
                "must be divisible by 32",
            ));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Defaults ← `path` (if given) ← `overrides`, then validation.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<PipelineConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
        None => String::new(),
    };
    parse_config_str(&text, overrides)
}

pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<PipelineConfig> {
    let mut tree = match Value::try_from(PipelineConfig::default()) {
        Ok(Value::Table(t)) => t,
        _ => unreachable!("config serializes to a table"),
    };
    let file: Table = toml::from_str(text).map_err(|e| Error::config("<file>", e.to_string()))?;
    merge(&mut tree, file, "")?;
    for ov in overrides {
        let (key, raw) = ov
            .split_once('=')
            .ok_or_else(|| Error::config(ov.clone(), "override must look like key=value"))?;
        let key = key.trim();
        let value = parse_override_value(raw.trim());
        let mut patch = Table::new();
        let mut parts: Vec<&str> = key.split('.').collect();
        let leaf = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::config(key, "empty key"))?;
        let mut cursor = &mut patch;
        for part in parts {
            cursor = match cursor
                .entry(part.to_string())
                .or_insert_with(|| Value::Table(Table::new()))
            {
                Value::Table(t) => t,
                _ => unreachable!(),
            };
        }
        cursor.insert(leaf.to_string(), value);
        merge(&mut tree, patch, "")?;
    }
    let cfg: PipelineConfig = Value::Table(tree)
        .try_into()
        .map_err(|e: toml::de::Error| Error::config("<config>", e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn parse_override_value(raw: &str) -> Value {
    #[derive(Deserialize)]
    struct Wrap {
        v: Value,
    }
    toml::from_str::<Wrap>(&format!("v = {raw}"))
        .map(|w| w.v)
        .unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Overlays `patch` onto `base`. Keys must already exist in `base` and
/// keep its value type (integers may stand in for floats).
fn merge(base: &mut Table, patch: Table, prefix: &str) -> Result<()> {
    for (k, v) in patch {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        let slot = base
            .get_mut(&k)
            .ok_or_else(|| Error::config(key.clone(), "unknown key"))?;
        match (slot, v) {
            (Value::Table(b), Value::Table(p)) => merge(b, p, &key)?,
            (slot @ Value::Float(_), Value::Integer(i)) => *slot = Value::Float(i as f64),
            (slot @ Value::Array(_), Value::Array(a)) => *slot = Value::Array(a),
            (slot, v) if slot.same_type(&v) => *slot = v,
            (slot, v) => {
                return Err(Error::config(
                    key,
                    format!("expected {}, got {}", slot.type_str(), v.type_str()),
                ))
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(parse_config_str("", &[]).unwrap(), PipelineConfig::default());
    }

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(parse_config_str(&cfg.to_toml(), &[]).unwrap(), cfg);
        assert_eq!(cfg.effective_batch(), 8);
    }

    #[test]
    fn precedence_file_then_overrides() {
        let text = "seed = 5\n[schedule]\ntotal_iters = 10\nbase_lr = 1\n";
        let cfg = parse_config_str(text, &["schedule.total_iters=96000".into()]).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.schedule.total_iters, 96000);
        assert_eq!(cfg.schedule.base_lr, 1.0);
        let cfg = parse_config_str(
            "",
            &[
                "output_dir=runs/x".into(),
                "augment.geometric.crop_size=[64, 64]".into(),
                "data.train_roots=[\"a\", \"b\"]".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.output_dir, "runs/x");
        assert_eq!(cfg.augment.geometric.crop_size, [64, 64]);
        assert_eq!(cfg.data.train_roots, vec!["a", "b"]);
    }

    #[test]
    fn errors_name_the_key() {
        let err = parse_config_str("", &["augment.photometric.p_apply=1.5".into()]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("augment.photometric.p_apply") && msg.contains("0 ≤ p_apply ≤ 1"), "{msg}");

        let err = parse_config_str("", &["optim.momentum=0.9".into()]).unwrap_err();
        assert!(err.to_string().contains("optim.momentum") && err.to_string().contains("unknown"));

        let err = parse_config_str("[train]\nbatch_size = \"two\"\n", &[]).unwrap_err();
        assert!(err.to_string().contains("train.batch_size"), "{err}");

        let err = parse_config_str("", &["train.eval_interval=0".into()]).unwrap_err();
        assert!(err.to_string().contains("train.eval_interval"));

        assert!(parse_config_str("", &["no_equals_sign".into()]).is_err());
        assert!(parse_config_str("not toml [", &[]).is_err());
    }

    #[test]
    fn zero_iterations_allowed() {
        let cfg = parse_config_str("", &["schedule.total_iters=0".into()]).unwrap();
        assert_eq!(cfg.schedule.total_iters, 0);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            parse_config(Some(Path::new("/nonexistent/cfg.toml")), &[]),
            Err(Error::Io { .. })
        ));
    }
}
