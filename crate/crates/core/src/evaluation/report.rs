use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{iou_from_confusion, ConfusionMatrix};
use crate::error::{Error, Result};
use crate::taxonomy::CLASS_NAMES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub config: String,
    pub classes: Vec<String>,
    /// Fractions in `[0, 1]`; `None` where the class has zero union.
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: Option<f64>,
    /// Evaluated (non-ignored) pixels.
    pub pixel_count: u64,
    /// Ground-truth pixels per class.
    pub class_pixel_counts: Vec<u64>,
    pub samples: usize,
    pub skipped_samples: usize,
}

impl EvalReport {
    pub fn from_confusion(
        cm: &ConfusionMatrix,
        model: impl Into<String>,
        config: impl Into<String>,
        samples: usize,
        skipped_samples: usize,
    ) -> Self {
        let iou = iou_from_confusion(cm);
        let classes = (0..cm.num_classes())
            .map(|k| {
                CLASS_NAMES
                    .get(k)
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| format!("class{k}"))
            })
            .collect();
        EvalReport {
            model: model.into(),
            config: config.into(),
            classes,
            per_class_iou: iou.per_class,
            miou: iou.miou,
            pixel_count: cm.total(),
            class_pixel_counts: cm.gt_counts(),
            samples,
            skipped_samples,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidArgument(format!("unknown report format `{other}`"))),
        }
    }
}

fn pct(v: Option<f64>) -> String {
    v.map(|v| format!("{:.2}", v * 100.0)).unwrap_or_else(|| "n/a".into())
}

/// Markdown table (mIoU first, then classes in taxonomy order, values in
/// percent) or pretty-printed JSON of the report fields.
pub fn render_report(report: &EvalReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)?),
        ReportFormat::Markdown => {
            let mut out = String::new();
            out.push_str("| Model | mIoU |");
            for c in &report.classes {
                out.push_str(&format!(" {c} |"));
            }
            out.push_str("\n|---|---:|");
            out.push_str(&"---:|".repeat(report.classes.len()));
            out.push_str(&format!("\n| {} | {} |", report.model, pct(report.miou)));
            for v in &report.per_class_iou {
                out.push_str(&format!(" {} |", pct(*v)));
            }
            out.push_str(&format!(
                "\n\n{} pixels from {} samples ({} skipped). Config: {}\n",
                report.pixel_count, report.samples, report.skipped_samples, report.config
            ));
            Ok(out)
        }
    }
}
