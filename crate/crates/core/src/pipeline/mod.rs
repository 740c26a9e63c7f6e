//! Configuration, dataset indexing, the training loop, checkpoints and
//! inference.

mod checkpoint;
mod config;
mod dataset;
mod predict;
mod train;

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::{
    parse_config, parse_config_str, AugmentConfig, DataConfig, EvalConfig, PipelineConfig,
    TrainConfig,
};
pub use dataset::{
    load_dataset, write_dataset, DatasetIndex, DiskDataset, MemoryDataset, SampleSource,
    SamplePaths,
};
pub use predict::{evaluate_dataset, evaluate_report, predict_images, Predictor};
pub use train::{
    checkpoint_path, open_datasets, train, train_with_sources, LossRecord, MetricRecord,
    RunManifest,
};
