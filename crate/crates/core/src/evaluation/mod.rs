//! Confusion matrices, per-class IoU and report rendering.

mod confusion;
mod report;

pub use confusion::{iou_from_confusion, mean_iou, ConfusionMatrix, IouResult};
pub use report::{render_report, EvalReport, ReportFormat};
