#![allow(dead_code)]

use std::path::{Path, PathBuf};

use morphforge::PipelineConfig;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

/// The scaled toy build with the given per-gender split sizes.
pub fn toy_config(train: usize, dev: usize, test: usize) -> PipelineConfig {
    let mut c = PipelineConfig::load(&fixture("toy_small.toml")).expect("fixture config");
    c.counts.train = train;
    c.counts.dev = dev;
    c.counts.test = test;
    c
}
