//! Core algorithms for building synthetic face-morphing datasets: latent
//! semantic editing, quality gates, landmark morphing and de-morphing,
//! contributor pairing and vulnerability/detection metrics.
//!
//! Everything here is pure and deterministic. Model-backed capabilities
//! (decoding, embeddings, pose, landmarks) live behind the gateway crate.

pub mod evaluation;
pub mod gates;
pub mod latent;
pub mod morph;
pub mod pairing;
pub mod raster;
pub mod synv;
pub mod types;

pub use raster::Raster;
pub use synv::SynvBlock;
pub use types::{Embedding, Gender, LandmarkSet, Point, PoseEstimate, Split};
