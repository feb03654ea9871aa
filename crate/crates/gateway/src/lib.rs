//! Uniform access to model-backed capabilities: latent sampling and
//! decoding, face embeddings, head pose and 68-point landmarks.
//!
//! Three interchangeable providers implement [`Provider`]:
//! [`ToyProvider`] renders analytic faces and answers every query offline,
//! [`FileProvider`] serves precomputed outputs keyed by content hash, and
//! [`HttpProvider`] talks to an inference sidecar over the JSON protocol in
//! [`wire`]. [`server`] hosts any provider behind that same protocol.

mod error;
mod file;
mod http;
pub mod server;
mod toy;
pub mod wire;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use morphforge_core::latent::LatentVector;
use morphforge_core::{Embedding, Gender, LandmarkSet, PoseEstimate, Raster};
use serde::{Deserialize, Serialize};

pub use error::GatewayError;
pub use file::{content_key, ContentRef, FileProvider};
pub use http::{HttpConfig, HttpProvider};
pub use toy::{ToyConfig, ToyProvider};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    SampleLatent,
    DecodeLatent,
    EmbedFace,
    EstimatePose,
    DetectLandmarks,
    /// Binary pseudo-gender label for a decoded face.
    LabelGender,
}

impl Capability {
    pub const ALL: [Capability; 6] = [
        Capability::SampleLatent,
        Capability::DecodeLatent,
        Capability::EmbedFace,
        Capability::EstimatePose,
        Capability::DetectLandmarks,
        Capability::LabelGender,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Capability::SampleLatent => "sample_latent",
            Capability::DecodeLatent => "decode_latent",
            Capability::EmbedFace => "embed_face",
            Capability::EstimatePose => "estimate_pose",
            Capability::DetectLandmarks => "detect_landmarks",
            Capability::LabelGender => "label_gender",
        }
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Capability {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Capability::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| GatewayError::Malformed(format!("unknown capability {s:?}")))
    }
}

pub type CapabilitySet = BTreeSet<Capability>;

/// Batch interface to the inference models. Every method fails with
/// [`GatewayError::Unsupported`] unless the capability is declared.
pub trait Provider: Send + Sync {
    fn name(&self) -> &str;

    fn capabilities(&self) -> &CapabilitySet;

    /// Embedding length every `embed_faces` result must have, if fixed.
    fn embedding_dim(&self) -> Option<usize> {
        None
    }

    fn sample_latents(&self, _count: usize, _seed: u64) -> Result<Vec<LatentVector>, GatewayError> {
        Err(GatewayError::Unsupported(Capability::SampleLatent))
    }

    fn decode_latents(&self, _latents: &[LatentVector]) -> Result<Vec<Raster>, GatewayError> {
        Err(GatewayError::Unsupported(Capability::DecodeLatent))
    }

    fn embed_faces(&self, _images: &[Raster]) -> Result<Vec<Embedding>, GatewayError> {
        Err(GatewayError::Unsupported(Capability::EmbedFace))
    }

    fn estimate_poses(&self, _images: &[Raster]) -> Result<Vec<PoseEstimate>, GatewayError> {
        Err(GatewayError::Unsupported(Capability::EstimatePose))
    }

    fn detect_landmarks(&self, _images: &[Raster]) -> Result<Vec<LandmarkSet>, GatewayError> {
        Err(GatewayError::Unsupported(Capability::DetectLandmarks))
    }

    fn label_genders(&self, _images: &[Raster]) -> Result<Vec<Gender>, GatewayError> {
        Err(GatewayError::Unsupported(Capability::LabelGender))
    }
}

/// Single-item conveniences over the batch calls.
pub trait ProviderExt: Provider {
    fn supports(&self, capability: Capability) -> bool {
        self.capabilities().contains(&capability)
    }

    fn require(&self, capability: Capability) -> Result<(), GatewayError> {
        if self.supports(capability) {
            Ok(())
        } else {
            Err(GatewayError::Unsupported(capability))
        }
    }

    fn decode_latent(&self, latent: &LatentVector) -> Result<Raster, GatewayError> {
        single(self.decode_latents(std::slice::from_ref(latent))?)
    }

    fn embed_face(&self, image: &Raster) -> Result<Embedding, GatewayError> {
        let e = single(self.embed_faces(std::slice::from_ref(image))?)?;
        check_embedding(self.embedding_dim(), &e)?;
        Ok(e)
    }

    fn estimate_pose(&self, image: &Raster) -> Result<PoseEstimate, GatewayError> {
        single(self.estimate_poses(std::slice::from_ref(image))?)
    }

    fn detect_landmarks_one(&self, image: &Raster) -> Result<LandmarkSet, GatewayError> {
        single(self.detect_landmarks(std::slice::from_ref(image))?)
    }

    fn label_gender(&self, image: &Raster) -> Result<Gender, GatewayError> {
        single(self.label_genders(std::slice::from_ref(image))?)
    }
}

impl<P: Provider + ?Sized> ProviderExt for P {}

fn single<T>(mut items: Vec<T>) -> Result<T, GatewayError> {
    if items.len() != 1 {
        return Err(GatewayError::Malformed(format!(
            "expected 1 result, got {}",
            items.len()
        )));
    }
    Ok(items.pop().unwrap())
}

/// Rejects zero embeddings and, when `declared` is set, length mismatches.
pub fn check_embedding(declared: Option<usize>, e: &Embedding) -> Result<(), GatewayError> {
    if let Some(dim) = declared {
        if e.dim() != dim {
            return Err(GatewayError::EmbeddingDim {
                expected: dim,
                actual: e.dim(),
            });
        }
    }
    if e.is_zero() || e.values().iter().any(|v| !v.is_finite()) {
        return Err(GatewayError::Malformed("zero or non-finite embedding".into()));
    }
    Ok(())
}
