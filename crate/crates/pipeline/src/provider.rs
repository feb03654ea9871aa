//! Builds the configured provider, direction set and gender source.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use morphforge_core::latent::DirectionSet;
use morphforge_core::{Gender, Raster};
use morphforge_gateway::{
    Capability, FileProvider, HttpConfig, HttpProvider, Provider, ProviderExt, ToyConfig, ToyProvider,
};
use serde::Deserialize;

use crate::config::{PipelineConfig, ProviderKind};
use crate::{directions, PipelineError};

pub fn toy(config: &PipelineConfig) -> Result<ToyProvider, PipelineError> {
    Ok(ToyProvider::new(ToyConfig {
        latent_dim: config.provider.latent_dim,
        embedding_dim: config.provider.embedding_dim.unwrap_or(16),
    })?)
}

pub fn open(config: &PipelineConfig) -> Result<Arc<dyn Provider>, PipelineError> {
    let p = &config.provider;
    Ok(match p.kind {
        ProviderKind::Toy => Arc::new(toy(config)?),
        ProviderKind::File => {
            let root = p
                .root
                .as_deref()
                .ok_or_else(|| PipelineError::Config("provider.root is unset".into()))?;
            Arc::new(FileProvider::open(config.resolve(root))?)
        }
        ProviderKind::Http => {
            let rt = &config.runtime;
            Arc::new(HttpProvider::connect(HttpConfig {
                endpoint: p.endpoint.clone(),
                retries: rt.retries,
                backoff: rt.backoff(),
                timeout: rt.timeout(),
                max_in_flight: rt.max_in_flight,
                embedding_dim: p.embedding_dim,
            })?)
        }
    })
}

/// Directions from the configured directory, or the toy provider's own.
pub fn directions(config: &PipelineConfig) -> Result<DirectionSet, PipelineError> {
    match (&config.directions, config.provider.kind) {
        (Some(dir), _) => directions::load(&config.resolve(dir)),
        (None, ProviderKind::Toy) => Ok(toy(config)?.directions()),
        (None, _) => Err(PipelineError::Config(
            "`directions` must name a direction directory for non-toy providers".into(),
        )),
    }
}

/// Where candidate gender labels come from.
pub enum GenderSource {
    Provider,
    /// Candidate index -> label.
    Labels(BTreeMap<u64, Gender>),
}

#[derive(Deserialize)]
struct LabelRow {
    candidate: u64,
    gender: String,
}

impl GenderSource {
    pub fn from_config(config: &PipelineConfig, provider: &dyn Provider) -> Result<Self, PipelineError> {
        match &config.gender_labels {
            Some(p) => Self::read(&config.resolve(p)),
            None if provider.supports(Capability::LabelGender) => Ok(GenderSource::Provider),
            None => Err(PipelineError::Config(format!(
                "provider {:?} cannot label gender; set `gender_labels`",
                provider.name()
            ))),
        }
    }

    /// Reads `candidate,gender` rows.
    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let mut reader =
            csv::Reader::from_path(path).map_err(|e| PipelineError::artifact(path.display().to_string(), e))?;
        let mut labels = BTreeMap::new();
        for row in reader.deserialize::<LabelRow>() {
            let row = row.map_err(|e| PipelineError::artifact(path.display().to_string(), e))?;
            let g: Gender = row
                .gender
                .parse()
                .map_err(|e: String| PipelineError::artifact(path.display().to_string(), e))?;
            labels.insert(row.candidate, g);
        }
        Ok(GenderSource::Labels(labels))
    }

    /// `None` when the label file has no entry for the candidate.
    pub fn label(
        &self,
        provider: &dyn Provider,
        candidate: u64,
        image: &Raster,
    ) -> Result<Option<Gender>, PipelineError> {
        match self {
            GenderSource::Provider => Ok(Some(provider.label_gender(image)?)),
            GenderSource::Labels(m) => Ok(m.get(&candidate).copied()),
        }
    }
}
