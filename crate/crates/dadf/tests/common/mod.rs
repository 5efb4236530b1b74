#![allow(dead_code)]

use std::path::Path;

use dadf::config::RunConfig;
use dadf::datagen::{generate, GenerateOptions, GeneratedDataset};

/// Overrides for a model small enough to train in a couple of seconds.
pub const SMALL: &[&str] = &[
    "model.image_size=32",
    "model.patch_size=8",
    "model.embed_dim=16",
    "model.num_layers=1",
    "model.num_heads=2",
    "model.task_dim=16",
    "adapter.mid_channels=4",
    "decoder.stages=3",
    "decoder.channels=8,8,8",
    "train.batch_size=4",
    "train.epochs=2",
    "train.eval_batch=4",
];

pub fn small_config(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.apply_overrides(SMALL).unwrap();
    cfg.out_dir = out.to_path_buf();
    cfg.validate().unwrap();
    cfg
}

pub fn small_dataset(root: &Path, counts: [usize; 3]) -> GeneratedDataset {
    let mut opts = GenerateOptions::desk(root, 3);
    opts.size = 32;
    opts.counts = counts;
    generate(&opts).unwrap()
}
