use std::collections::HashMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::config::PipelineConfig;
use super::dataset::{load_dataset, DiskDataset, SampleSource};
use super::predict::{evaluate_dataset, Predictor};
use crate::augmentation::{geometric_pipeline, photometric_distortion, RngStream};
use crate::error::{Error, Result};
use crate::evaluation::iou_from_confusion;
use crate::model::{cross_entropy_sum, normalize_batch, ParamSet, SegNet};
use crate::optimization::{adamw_step, poly_lr, EmaState, OptimizerState};
use crate::raster::{Image, LabelMap};
use crate::taxonomy::{Mapping, IGNORE_ID};

const DOMAIN_PERMUTATION: u64 = 1;
const DOMAIN_AUGMENT: u64 = 2;
const DOMAIN_INIT: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: u64,
    pub loss: f64,
    pub lr: f64,
}

/// One validation pass, always run on the EMA weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub iteration: u64,
    pub miou: Option<f64>,
    pub per_class_iou: Vec<Option<f64>>,
    pub ema_updates: u64,
    /// Fingerprint of the parameters that were evaluated.
    pub param_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: PipelineConfig,
    pub start_iteration: u64,
    pub end_iteration: u64,
    /// `loss` at iteration `t` is the objective the step from `t` to `t + 1`
    /// descended.
    pub losses: Vec<LossRecord>,
    pub metrics: Vec<MetricRecord>,
    pub checkpoints: Vec<String>,
    pub final_param_fingerprint: String,
    pub final_ema_fingerprint: Option<String>,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Builds the train and (optional) validation sources named in the config.
pub fn open_datasets(cfg: &PipelineConfig) -> Result<(DiskDataset, Option<DiskDataset>)> {
    let mapping = if !cfg.data.labels_raw {
        None
    } else if cfg.data.mapping.is_empty() {
        Some(Mapping::goose_default())
    } else {
        Some(Mapping::load(&cfg.data.mapping)?)
    };
    if cfg.data.train_roots.is_empty() {
        return Err(Error::config("data.train_roots", "no training roots given"));
    }
    let train = DiskDataset::new(load_dataset(&cfg.data.train_roots)?, mapping.clone());
    let val = if cfg.data.val_roots.is_empty() {
        None
    } else {
        Some(DiskDataset::new(load_dataset(&cfg.data.val_roots)?, mapping))
    };
    Ok((train, val))
}

/// Runs the configured experiment against the on-disk datasets.
pub fn train(cfg: &PipelineConfig) -> Result<RunManifest> {
    let (train_ds, val_ds) = open_datasets(cfg)?;
    train_with_sources(cfg, &train_ds, val_ds.as_ref().map(|v| v as &dyn SampleSource))
}

pub fn checkpoint_path(output_dir: &Path, iteration: u64) -> PathBuf {
    output_dir
        .join("checkpoints")
        .join(format!("iter_{iteration:08}.ckpt"))
}

/// Training loop over explicit sample sources. Writes checkpoints and
/// `manifest.json` below `cfg.output_dir`.
pub fn train_with_sources(
    cfg: &PipelineConfig,
    train_src: &dyn SampleSource,
    val_src: Option<&dyn SampleSource>,
) -> Result<RunManifest> {
    cfg.validate()?;
    if train_src.is_empty() {
        return Err(Error::Dataset("training dataset is empty".into()));
    }
    let out = PathBuf::from(&cfg.output_dir);
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let net = SegNet::new(&cfg.model)?;

    let (mut params, mut opt, mut ema, start) = if cfg.train.resume_from.is_empty() {
        let params = net.init_params(derive_u64(cfg.seed, DOMAIN_INIT));
        let opt = OptimizerState::new(cfg.optim.clone(), &params);
        (params, opt, EmaState::new(cfg.ema.alpha)?, 0)
    } else {
        let ck = Checkpoint::load(&cfg.train.resume_from)?;
        if ck.config.model != cfg.model {
            return Err(Error::Checkpoint(format!(
                "{}: model config differs from the run config",
                cfg.train.resume_from
            )));
        }
        net.check_params(&ck.params)?;
        info!("resuming from iteration {}", ck.iteration);
        (ck.params, ck.optimizer, ck.ema, ck.iteration)
    };
    let total = cfg.schedule.total_iters;
    if start > total {
        return Err(Error::Checkpoint(format!(
            "checkpoint iteration {start} is past total_iters {total}"
        )));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.data.num_workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let mut sampler = Sampler::new(cfg.seed, train_src.len());
    let mut manifest = RunManifest {
        config: cfg.clone(),
        start_iteration: start,
        end_iteration: start,
        losses: Vec::new(),
        metrics: Vec::new(),
        checkpoints: Vec::new(),
        final_param_fingerprint: String::new(),
        final_ema_fingerprint: None,
    };
    let save = |iteration: u64,
                params: &ParamSet,
                opt: &OptimizerState,
                ema: &EmaState,
                manifest: &mut RunManifest|
     -> Result<()> {
        let path = checkpoint_path(&out, iteration);
        Checkpoint {
            config: cfg.clone(),
            iteration,
            params: params.clone(),
            optimizer: opt.clone(),
            ema: ema.clone(),
        }
        .save(&path)?;
        manifest.checkpoints.push(path.display().to_string());
        Ok(())
    };
    if start == 0 {
        save(0, &params, &opt, &ema, &mut manifest)?;
    }

    let eff = cfg.effective_batch() as u64;
    for t in start..total {
        let lr = poly_lr(t, &cfg.schedule)?;
        let positions: Vec<u64> = (t * eff..(t + 1) * eff).collect();
        let indices: Vec<usize> = positions.iter().map(|&p| sampler.index(p)).collect();
        let batch: Vec<(Image, LabelMap)> = pool.install(|| {
            positions
                .par_iter()
                .zip(&indices)
                .map(|(&p, &i)| augment_sample(cfg, train_src, i, p))
                .collect::<Result<_>>()
        })?;

        let (loss, grads) = accumulate_gradients(cfg, &net, &params, &batch)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                loss,
                iteration: t,
            });
        }
        adamw_step(&mut params, &grads, &mut opt, lr)?;
        ema.update(&params)?;
        manifest.losses.push(LossRecord {
            iteration: t,
            loss,
            lr,
        });
        let done = t + 1;
        log::debug!("iteration {done}/{total} loss {loss:.6} lr {lr:.3e}");

        if done % cfg.train.eval_interval == 0 {
            if let Some(val) = val_src {
                let snapshot = ema.snapshot()?;
                let fingerprint = snapshot.fingerprint();
                let predictor =
                    Predictor::new(net.clone(), snapshot, cfg.augment.geometric.image_pad_value)?;
                let (cm, skipped) = evaluate_dataset(&predictor, val, IGNORE_ID)?;
                let iou = iou_from_confusion(&cm);
                info!(
                    "iteration {done}: EMA mIoU {} ({skipped} samples skipped)",
                    iou.miou.map_or("n/a".into(), |m| format!("{:.2}", m * 100.0))
                );
                manifest.metrics.push(MetricRecord {
                    iteration: done,
                    miou: iou.miou,
                    per_class_iou: iou.per_class,
                    ema_updates: ema.updates(),
                    param_fingerprint: fingerprint,
                });
            }
        }
        if done % cfg.train.checkpoint_interval == 0 || done == total {
            save(done, &params, &opt, &ema, &mut manifest)?;
        }
    }

    manifest.end_iteration = total;
    manifest.final_param_fingerprint = params.fingerprint();
    manifest.final_ema_fingerprint = ema.shadow().map(ParamSet::fingerprint);
    manifest.write(&out.join("manifest.json"))?;
    Ok(manifest)
}

/// Sums cross-entropy and its gradients over all micro-batches, then
/// normalizes by the total number of valid pixels in the effective batch.
fn accumulate_gradients(
    cfg: &PipelineConfig,
    net: &SegNet,
    params: &ParamSet,
    batch: &[(Image, LabelMap)],
) -> Result<(f64, ParamSet)> {
    let rounded;
    let fwd_params = if cfg.train.mixed_precision {
        rounded = params.map(|v| v as f32 as f64);
        &rounded
    } else {
        params
    };
    let mut grads = params.zeros_like();
    let mut loss_sum = 0.0;
    let mut valid = 0usize;
    for micro in batch.chunks(cfg.train.batch_size) {
        let images: Vec<Image> = micro.iter().map(|s| s.0.clone()).collect();
        let labels: Vec<LabelMap> = micro.iter().map(|s| s.1.clone()).collect();
        let mut x = normalize_batch(&images, &cfg.model)?;
        if cfg.train.mixed_precision {
            x.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
        let (tape, out) = net.forward(fwd_params, x)?;
        let (sum, count, g) = cross_entropy_sum(tape.value(out), &labels, IGNORE_ID)?;
        loss_sum += sum;
        valid += count;
        grads.add_assign(&tape.backward(out, g)?);
    }
    if valid == 0 {
        warn!("effective batch has no labelled pixels; applying weight decay only");
        return Ok((0.0, grads));
    }
    let scale = 1.0 / valid as f64;
    Ok((loss_sum * scale, grads.map(|g| g * scale)))
}

fn augment_sample(
    cfg: &PipelineConfig,
    src: &dyn SampleSource,
    index: usize,
    position: u64,
) -> Result<(Image, LabelMap)> {
    let (img, lbl) = src.load(index)?;
    let mut rng = RngStream::derive(cfg.seed, &[DOMAIN_AUGMENT, position]);
    let (img, lbl) = geometric_pipeline(&img, &lbl, &cfg.augment.geometric, &mut rng)?;
    let img = photometric_distortion(&img, &cfg.augment.photometric, &mut rng)?;
    Ok((img, lbl))
}

fn derive_u64(seed: u64, domain: u64) -> u64 {
    RngStream::derive(seed, &[domain]).below(u64::MAX)
}

/// Maps a global stream position to a sample index: each epoch visits
/// every sample once, in a seed-derived order.
struct Sampler {
    seed: u64,
    len: usize,
    epochs: HashMap<u64, Vec<usize>>,
}

impl Sampler {
    fn new(seed: u64, len: usize) -> Self {
        Sampler {
            seed,
            len,
            epochs: HashMap::new(),
        }
    }

    fn index(&mut self, position: u64) -> usize {
        let n = self.len as u64;
        let (epoch, offset) = (position / n, (position % n) as usize);
        let (seed, len) = (self.seed, self.len);
        if !self.epochs.contains_key(&epoch) {
            // only the current epoch is ever needed again
            self.epochs.retain(|&e, _| e + 1 >= epoch);
        }
        self.epochs
            .entry(epoch)
            .or_insert_with(|| epoch_permutation(seed, epoch, len))[offset]
    }
}

pub(crate) fn epoch_permutation(seed: u64, epoch: u64, len: usize) -> Vec<usize> {
    let mut rng = RngStream::derive(seed, &[DOMAIN_PERMUTATION, epoch]);
    let mut perm: Vec<usize> = (0..len).collect();
    for i in (1..len).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        perm.swap(i, j);
    }
    perm
}
