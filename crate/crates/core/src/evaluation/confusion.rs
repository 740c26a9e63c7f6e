use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::LabelMap;

/// `K × K` pixel counts; rows are ground truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        ConfusionMatrix {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Ground-truth pixel count per class (row sums).
    pub fn gt_counts(&self) -> Vec<u64> {
        self.counts
            .chunks_exact(self.num_classes)
            .map(|row| row.iter().sum())
            .collect()
    }

    /// Adds every pixel whose ground truth is not `ignore_id`.
    pub fn accumulate(&mut self, pred: &LabelMap, gt: &LabelMap, ignore_id: u8) -> Result<()> {
        if pred.height() != gt.height() || pred.width() != gt.width() {
            return Err(Error::Shape(format!(
                "prediction {}x{} vs ground truth {}x{}",
                pred.height(),
                pred.width(),
                gt.height(),
                gt.width()
            )));
        }
        let k = self.num_classes;
        let w = gt.width();
        // validate first so a bad map leaves the matrix untouched
        for (i, (&p, &g)) in pred.data().iter().zip(gt.data()).enumerate() {
            if g != ignore_id && (g as usize >= k || p as usize >= k) {
                let id = if g as usize >= k { g } else { p };
                return Err(Error::InvalidLabel { id, x: i % w, y: i / w });
            }
        }
        for (&p, &g) in pred.data().iter().zip(gt.data()) {
            if g != ignore_id {
                self.counts[g as usize * k + p as usize] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::Shape(format!(
                "merging {0}x{0} into {1}x{1} confusion matrix",
                other.num_classes, self.num_classes
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouResult {
    /// `None` for classes with zero union.
    pub per_class: Vec<Option<f64>>,
    pub miou: Option<f64>,
}

impl IouResult {
    pub fn absent_classes(&self) -> Vec<usize> {
        self.per_class
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_none())
            .map(|(k, _)| k)
            .collect()
    }
}

/// `IoU_k = TP / (TP + FP + FN)`; classes with zero union are reported
/// as `None` and left out of the mean.
pub fn iou_from_confusion(cm: &ConfusionMatrix) -> IouResult {
    let k = cm.num_classes();
    let per_class: Vec<Option<f64>> = (0..k)
        .map(|c| {
            let tp = cm.get(c, c);
            let fp: u64 = (0..k).filter(|&j| j != c).map(|j| cm.get(j, c)).sum();
            let fn_: u64 = (0..k).filter(|&j| j != c).map(|j| cm.get(c, j)).sum();
            let union = tp + fp + fn_;
            (union > 0).then(|| tp as f64 / union as f64)
        })
        .collect();
    let miou = mean_iou(&per_class);
    IouResult { per_class, miou }
}

/// Arithmetic mean of the present values.
pub fn mean_iou(per_class: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}
