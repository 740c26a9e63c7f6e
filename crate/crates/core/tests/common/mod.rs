#![allow(dead_code)]

use offroad_seg::augmentation::PhotometricConfig;
use offroad_seg::model::ModelConfig;
use offroad_seg::pipeline::{MemoryDataset, PipelineConfig};
use offroad_seg::{Image, LabelMap};

pub const TOY_COLORS: [[f32; 3]; 3] = [[60.0, 140.0, 50.0], [200.0, 60.0, 40.0], [40.0, 70.0, 210.0]];

/// Label layout for toy sample `i`: class 0 background, a horizontal band of
/// class 1 and a rectangle of class 2, all on an 8-pixel grid.
pub fn toy_labels(i: usize, size: usize) -> LabelMap {
    let band = 8 * (1 + i % 3);
    let (ry, rx) = (8 * (2 + i % 2), 8 * (1 + (i * 3) % 4));
    LabelMap::from_fn(size, size, |y, x| {
        if y >= ry && y < ry + 24 && x >= rx && x < rx + 24 {
            2
        } else if y >= band && y < band + 8 {
            1
        } else {
            0
        }
    })
}

pub fn toy_image(labels: &LabelMap, i: usize) -> Image {
    Image::from_fn(labels.height(), labels.width(), |y, x| {
        let base = TOY_COLORS[labels.get(y, x) as usize];
        let jitter = ((y * 7 + x * 13 + i * 5) % 11) as f32 - 5.0;
        base.map(|c| c + jitter)
    })
}

pub fn toy_dataset(n: usize, size: usize) -> MemoryDataset {
    MemoryDataset {
        samples: (0..n)
            .map(|i| {
                let lbl = toy_labels(i, size);
                (format!("toy{i:02}"), toy_image(&lbl, i), lbl)
            })
            .collect(),
    }
}

/// Small, fast configuration on 64×64 toy data writing to `out`.
pub fn toy_config(out: &std::path::Path, total_iters: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.seed = 7;
    cfg.output_dir = out.display().to_string();
    cfg.model = ModelConfig::tiny();
    cfg.augment.photometric = PhotometricConfig::disabled();
    cfg.augment.geometric.scale_range = [1.0, 1.0];
    cfg.augment.geometric.crop_size = [64, 64];
    cfg.schedule.total_iters = total_iters;
    cfg.schedule.base_lr = 1e-2;
    cfg.ema.alpha = 0.9;
    cfg.train.batch_size = 2;
    cfg.train.grad_accumulation_steps = 1;
    cfg.train.eval_interval = 100;
    cfg.train.checkpoint_interval = 100;
    cfg
}
