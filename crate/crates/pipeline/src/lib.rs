//! Builds synthetic face-morphing datasets and evaluates them.
//!
//! A build runs as separate stages sharing one dataset directory and its
//! manifest: base acceptance, mated generation, pairing and morphing, with
//! [`validate`] checking the result. The [`eval`] module turns score files
//! into vulnerability, detection and quality tables.

pub mod config;
pub mod dataset;
pub mod directions;
mod error;
pub mod eval;
pub mod manifest;
pub mod provider;
pub mod stages;
pub mod validate;

use std::path::PathBuf;
use std::sync::Arc;

use morphforge_core::latent::DirectionSet;
use morphforge_gateway::Provider;
use sha2::{Digest, Sha256};

pub use config::PipelineConfig;
pub use dataset::Dataset;
pub use error::{PipelineError, Shortfall};
pub use manifest::DatasetManifest;
pub use validate::{validate_manifest, Violation};

/// Everything a stage needs: configuration, models, directions, output.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub provider: Arc<dyn Provider>,
    pub directions: DirectionSet,
    pub dataset: Dataset,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(
        config: PipelineConfig,
        provider: Arc<dyn Provider>,
        directions: DirectionSet,
        root: impl Into<PathBuf>,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.runtime.threads)
            .build()
            .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
        Ok(Self {
            config,
            provider,
            directions,
            dataset: Dataset::new(root),
            pool,
        })
    }

    /// Opens the configured provider and directions.
    pub fn open(config: PipelineConfig, root: impl Into<PathBuf>) -> Result<Self, PipelineError> {
        let provider = provider::open(&config)?;
        let directions = provider::directions(&config)?;
        Self::new(config, provider, directions, root)
    }

    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }

    pub fn load_manifest(&self) -> Result<DatasetManifest, PipelineError> {
        DatasetManifest::load(&self.dataset)
    }
}

/// Platform-independent sub-seed for `stream` and `index` under `seed`.
pub fn derive_seed(seed: u64, stream: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((stream.len() as u64).to_le_bytes());
    h.update(stream.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}
