//! The dataset manifest: a single JSON document listing every artifact.
//!
//! Nothing time-dependent is stored here; run timestamps go to
//! `provenance.json`, so identical inputs give identical manifest bytes.

use std::collections::BTreeMap;

use morphforge_core::gates::GlassesVerdict;
use morphforge_core::latent::{EditMode, EditRecipe};
use morphforge_core::morph::MorphRecord;
use morphforge_core::{Gender, PoseEstimate, Split};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, MANIFEST, PROVENANCE};
use crate::PipelineError;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub subjects: Vec<SubjectRecord>,
    #[serde(default)]
    pub acceptance: AcceptanceStats,
    /// subject -> mode -> mated samples.
    #[serde(default)]
    pub mated: BTreeMap<String, BTreeMap<EditMode, MatedList>>,
    #[serde(default)]
    pub pairs: Vec<PairRecord>,
    #[serde(default)]
    pub morphs: Vec<MorphEntry>,
    /// Work items that failed without stopping their stage.
    #[serde(default)]
    pub failures: Vec<FailureRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub gender: Gender,
    pub split: Split,
    /// Index of the candidate this subject was drawn as.
    pub candidate: u64,
    pub artifacts: SubjectArtifacts,
    pub gates: GateMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectArtifacts {
    pub image: String,
    pub latent: String,
    pub embedding: String,
    pub landmarks: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateMetadata {
    pub pose: PoseEstimate,
    /// Eye aspect ratios, right then left.
    pub ear: [f64; 2],
    pub glasses: GlassesVerdict,
    /// Distance to the closest identity accepted before this one.
    pub nearest_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub candidates: u64,
    /// Rejections per gate.
    pub rejected: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatedList {
    pub samples: Vec<MatedRecord>,
    /// Recipes whose output failed the preservation check.
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatedRecord {
    pub id: String,
    pub image: String,
    pub latent: String,
    /// Cosine distance between this sample's and the base's embeddings.
    pub distance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<EditRecipe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frpca: Option<FrpcaInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrpcaInfo {
    pub seed: u64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub split: Split,
    pub gender: Gender,
    pub subject_a: String,
    pub subject_b: String,
    pub similarity: f64,
    pub chosen_by: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphEntry {
    pub morph_id: String,
    pub split: Split,
    pub gender: Gender,
    #[serde(flatten)]
    pub record: MorphRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub stage: String,
    pub item: String,
    pub message: String,
}

impl DatasetManifest {
    pub fn new(config_hash: impl Into<String>) -> Self {
        Self {
            version: MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash.into(),
            subjects: Vec::new(),
            acceptance: AcceptanceStats::default(),
            mated: BTreeMap::new(),
            pairs: Vec::new(),
            morphs: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn load(ds: &Dataset) -> Result<Self, PipelineError> {
        let bytes = ds.read_bytes(MANIFEST)?;
        serde_json::from_slice(&bytes).map_err(|e| PipelineError::Manifest(format!("{MANIFEST}: {e}")))
    }

    pub fn save(&self, ds: &Dataset) -> Result<(), PipelineError> {
        ds.write_json(MANIFEST, self)
    }

    pub fn subject(&self, id: &str) -> Option<&SubjectRecord> {
        self.subjects.iter().find(|s| s.subject_id == id)
    }

    pub fn subjects_in(&self, split: Split) -> impl Iterator<Item = &SubjectRecord> {
        self.subjects.iter().filter(move |s| s.split == split)
    }

    /// Drops earlier failures of `stage` before a rerun records its own.
    pub fn clear_failures(&mut self, stage: &str) {
        self.failures.retain(|f| f.stage != stage);
    }
}

/// Stage completion times, kept beside the manifest.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    /// stage -> seconds since the Unix epoch of its last completion.
    pub stages: BTreeMap<String, u64>,
}

/// Records that `stage` just finished.
pub fn stamp(ds: &Dataset, stage: &str) -> Result<(), PipelineError> {
    let mut p: Provenance = if ds.exists(PROVENANCE) {
        ds.read_json(PROVENANCE)?
    } else {
        Provenance::default()
    };
    p.tool_version = env!("CARGO_PKG_VERSION").to_string();
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    p.stages.insert(stage.to_string(), now);
    ds.write_json(PROVENANCE, &p)
}
