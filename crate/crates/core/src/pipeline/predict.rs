use log::warn;
use rayon::prelude::*;

use super::checkpoint::Checkpoint;
use super::dataset::SampleSource;
use crate::error::{Error, Result};
use crate::evaluation::{ConfusionMatrix, EvalReport};
use crate::model::{argmax, normalize_batch, ParamSet, SegNet};
use crate::raster::{Image, LabelMap};

/// A network with fixed weights, ready for inference.
#[derive(Debug, Clone)]
pub struct Predictor {
    net: SegNet,
    params: ParamSet,
    pad_value: f64,
}

impl Predictor {
    pub fn new(net: SegNet, params: ParamSet, pad_value: f64) -> Result<Self> {
        net.check_params(&params)?;
        Ok(Predictor {
            net,
            params,
            pad_value,
        })
    }

    /// Uses the EMA shadow when `use_ema` is set, the live weights otherwise.
    pub fn from_checkpoint(ckpt: &Checkpoint, use_ema: bool) -> Result<Self> {
        let net = SegNet::new(&ckpt.config.model)?;
        let params = if use_ema {
            ckpt.ema.snapshot()?
        } else {
            ckpt.params.clone()
        };
        net.check_params(&params).map_err(|e| {
            Error::Checkpoint(format!("parameters do not match the stored model config: {e}"))
        })?;
        Self::new(net, params, ckpt.config.augment.geometric.image_pad_value)
    }

    pub fn net(&self) -> &SegNet {
        &self.net
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    /// Pads bottom/right to a multiple of 32, predicts, and crops back.
    pub fn predict(&self, img: &Image) -> Result<LabelMap> {
        let (h, w) = (img.height(), img.width());
        if h == 0 || w == 0 {
            return Err(Error::Shape("empty image".into()));
        }
        let (ph, pw) = (h.next_multiple_of(32), w.next_multiple_of(32));
        let padded;
        let input = if (ph, pw) == (h, w) {
            img
        } else {
            padded = Image::from_fn(ph, pw, |y, x| {
                if y < h && x < w {
                    img.pixel(y, x)
                } else {
                    [self.pad_value as f32; 3]
                }
            });
            &padded
        };
        let x = normalize_batch(std::slice::from_ref(input), self.net.config())?;
        let logits = self.net.segment(&self.params, x)?;
        let pred = argmax(&logits).remove(0);
        pred.crop(0, 0, h, w)
    }

    pub fn predict_all(&self, images: &[Image]) -> Result<Vec<LabelMap>> {
        images.par_iter().map(|img| self.predict(img)).collect()
    }
}

pub fn predict_images(ckpt: &Checkpoint, images: &[Image], use_ema: bool) -> Result<Vec<LabelMap>> {
    Predictor::from_checkpoint(ckpt, use_ema)?.predict_all(images)
}

/// Streams `source` through the predictor and merges per-sample confusion
/// matrices. Unreadable samples are skipped and counted.
pub fn evaluate_dataset(
    predictor: &Predictor,
    source: &dyn SampleSource,
    ignore_id: u8,
) -> Result<(ConfusionMatrix, usize)> {
    if source.is_empty() {
        return Err(Error::Dataset("evaluation dataset is empty".into()));
    }
    let k = predictor.net.config().num_classes;
    let per_sample: Vec<Option<ConfusionMatrix>> = (0..source.len())
        .into_par_iter()
        .map(|i| {
            let (img, gt) = match source.load(i) {
                Ok(s) => s,
                Err(e) => {
                    warn!("skipping `{}`: {e}", source.name(i));
                    return Ok(None);
                }
            };
            let pred = predictor.predict(&img)?;
            let mut cm = ConfusionMatrix::new(k);
            cm.accumulate(&pred, &gt, ignore_id)?;
            Ok(Some(cm))
        })
        .collect::<Result<_>>()?;
    let mut total = ConfusionMatrix::new(k);
    let mut skipped = 0;
    for cm in per_sample {
        match cm {
            Some(cm) => total.merge(&cm)?,
            None => skipped += 1,
        }
    }
    if skipped == source.len() {
        return Err(Error::Dataset("no evaluation sample could be read".into()));
    }
    Ok((total, skipped))
}

/// [`evaluate_dataset`] wrapped into a report.
pub fn evaluate_report(
    predictor: &Predictor,
    source: &dyn SampleSource,
    ignore_id: u8,
    model: &str,
    config: &str,
) -> Result<EvalReport> {
    let (cm, skipped) = evaluate_dataset(predictor, source, ignore_id)?;
    Ok(EvalReport::from_confusion(
        &cm,
        model,
        config,
        source.len() - skipped,
        skipped,
    ))
}
