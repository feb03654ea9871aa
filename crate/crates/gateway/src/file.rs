//! Precomputed model outputs resolved by content hash.
//!
//! ```text
//! <root>/provider.json            {"capabilities":[...],"embedding_dim":16}
//! <root>/sample/<seed>-<count>.synv
//! <root>/decode/<latent key>.png
//! <root>/embed/<image key>.synv
//! <root>/pose/<image key>.json
//! <root>/landmarks/<image key>.json
//! <root>/gender/<image key>.json
//! ```
//!
//! Latent keys hash the one-row SYNV encoding of the latent; image keys hash
//! the raster shape and pixels, so they do not depend on PNG encoder output.

use std::path::{Path, PathBuf};

use morphforge_core::latent::LatentVector;
use morphforge_core::{Embedding, Gender, LandmarkSet, PoseEstimate, Raster, SynvBlock};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Capability, CapabilitySet, GatewayError, Provider};

const MANIFEST: &str = "provider.json";

#[derive(Debug, Serialize, Deserialize)]
struct StoreManifest {
    capabilities: Vec<Capability>,
    #[serde(default)]
    embedding_dim: Option<usize>,
}

/// Hex SHA-256 of an image or latent, as used for file names.
pub fn content_key(item: ContentRef<'_>) -> String {
    let mut h = Sha256::new();
    match item {
        ContentRef::Latent(w) => {
            let block = SynvBlock::from_rows(&[w.values()]).expect("finite latent");
            h.update(block.encode().expect("finite latent"));
        }
        ContentRef::Image(r) => {
            h.update(b"RAST");
            h.update(r.width().to_le_bytes());
            h.update(r.height().to_le_bytes());
            h.update([r.channels()]);
            h.update(r.data());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy)]
pub enum ContentRef<'a> {
    Latent(&'a LatentVector),
    Image(&'a Raster),
}

pub struct FileProvider {
    root: PathBuf,
    capabilities: CapabilitySet,
    embedding_dim: Option<usize>,
}

impl FileProvider {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let root = root.into();
        let text = std::fs::read_to_string(root.join(MANIFEST))
            .map_err(|e| GatewayError::Config(format!("{}: {e}", root.join(MANIFEST).display())))?;
        let m: StoreManifest =
            serde_json::from_str(&text).map_err(|e| GatewayError::Config(format!("{MANIFEST}: {e}")))?;
        Ok(Self {
            root,
            capabilities: m.capabilities.into_iter().collect(),
            embedding_dim: m.embedding_dim,
        })
    }

    /// Creates an empty store declaring `capabilities`.
    pub fn create(
        root: impl Into<PathBuf>,
        capabilities: &CapabilitySet,
        embedding_dim: Option<usize>,
    ) -> Result<Self, GatewayError> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        let m = StoreManifest {
            capabilities: capabilities.iter().copied().collect(),
            embedding_dim,
        };
        std::fs::write(root.join(MANIFEST), serde_json::to_vec_pretty(&m).expect("manifest"))?;
        Self::open(root)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, kind: &str, key: &str, ext: &str) -> PathBuf {
        self.root.join(kind).join(format!("{key}.{ext}"))
    }

    fn read(&self, kind: &str, key: &str, ext: &str) -> Result<Vec<u8>, GatewayError> {
        let path = self.path(kind, key, ext);
        std::fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => GatewayError::NotFound(format!("{kind}/{key}")),
            _ => GatewayError::Io(e),
        })
    }

    fn write(&self, kind: &str, key: &str, ext: &str, bytes: &[u8]) -> Result<(), GatewayError> {
        let path = self.path(kind, key, ext);
        std::fs::create_dir_all(path.parent().expect("kind directory"))?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    fn read_json<T: DeserializeOwned>(&self, kind: &str, key: &str) -> Result<T, GatewayError> {
        let bytes = self.read(kind, key, "json")?;
        serde_json::from_slice(&bytes).map_err(|e| GatewayError::Malformed(format!("{kind}/{key}: {e}")))
    }

    fn read_vectors(&self, kind: &str, key: &str) -> Result<Vec<Vec<f64>>, GatewayError> {
        let bytes = self.read(kind, key, "synv")?;
        Ok(SynvBlock::decode(&bytes)
            .map_err(|e| GatewayError::Malformed(format!("{kind}/{key}: {e}")))?
            .rows_f64())
    }

    fn require(&self, capability: Capability) -> Result<(), GatewayError> {
        if self.capabilities.contains(&capability) {
            Ok(())
        } else {
            Err(GatewayError::Unsupported(capability))
        }
    }

    pub fn put_samples(&self, seed: u64, latents: &[LatentVector]) -> Result<(), GatewayError> {
        let rows: Vec<&[f64]> = latents.iter().map(|w| w.values()).collect();
        let block = SynvBlock::from_rows(&rows).map_err(|e| GatewayError::BadRequest(e.to_string()))?;
        let bytes = block.encode().map_err(|e| GatewayError::BadRequest(e.to_string()))?;
        self.write("sample", &format!("{seed}-{}", latents.len()), "synv", &bytes)
    }

    pub fn put_decode(&self, latent: &LatentVector, image: &Raster) -> Result<(), GatewayError> {
        let png = image
            .to_png_bytes()
            .map_err(|e| GatewayError::BadRequest(e.to_string()))?;
        self.write("decode", &content_key(ContentRef::Latent(latent)), "png", &png)
    }

    pub fn put_embedding(&self, image: &Raster, embedding: &Embedding) -> Result<(), GatewayError> {
        let block = SynvBlock::from_rows(&[embedding.values()]).map_err(|e| GatewayError::BadRequest(e.to_string()))?;
        let bytes = block.encode().map_err(|e| GatewayError::BadRequest(e.to_string()))?;
        self.write("embed", &content_key(ContentRef::Image(image)), "synv", &bytes)
    }

    pub fn put_pose(&self, image: &Raster, pose: &PoseEstimate) -> Result<(), GatewayError> {
        let json = serde_json::to_vec(pose).expect("pose");
        self.write("pose", &content_key(ContentRef::Image(image)), "json", &json)
    }

    pub fn put_landmarks(&self, image: &Raster, landmarks: &LandmarkSet) -> Result<(), GatewayError> {
        let json = serde_json::to_vec(landmarks).expect("landmarks");
        self.write("landmarks", &content_key(ContentRef::Image(image)), "json", &json)
    }

    pub fn put_gender(&self, image: &Raster, gender: Gender) -> Result<(), GatewayError> {
        let json = serde_json::to_vec(&gender).expect("gender");
        self.write("gender", &content_key(ContentRef::Image(image)), "json", &json)
    }
}

impl Provider for FileProvider {
    fn name(&self) -> &str {
        "file"
    }

    fn capabilities(&self) -> &CapabilitySet {
        &self.capabilities
    }

    fn embedding_dim(&self) -> Option<usize> {
        self.embedding_dim
    }

    fn sample_latents(&self, count: usize, seed: u64) -> Result<Vec<LatentVector>, GatewayError> {
        self.require(Capability::SampleLatent)?;
        self.read_vectors("sample", &format!("{seed}-{count}"))?
            .into_iter()
            .map(|v| LatentVector::new(v).map_err(|e| GatewayError::Malformed(e.to_string())))
            .collect()
    }

    fn decode_latents(&self, latents: &[LatentVector]) -> Result<Vec<Raster>, GatewayError> {
        self.require(Capability::DecodeLatent)?;
        latents
            .iter()
            .map(|w| {
                let key = content_key(ContentRef::Latent(w));
                let bytes = self.read("decode", &key, "png")?;
                Raster::from_png_bytes(&bytes).map_err(|e| GatewayError::Malformed(format!("decode/{key}: {e}")))
            })
            .collect()
    }

    fn embed_faces(&self, images: &[Raster]) -> Result<Vec<Embedding>, GatewayError> {
        self.require(Capability::EmbedFace)?;
        images
            .iter()
            .map(|img| {
                let key = content_key(ContentRef::Image(img));
                let mut rows = self.read_vectors("embed", &key)?;
                if rows.len() != 1 {
                    return Err(GatewayError::Malformed(format!("embed/{key}: {} rows", rows.len())));
                }
                Ok(Embedding::new(rows.pop().unwrap()))
            })
            .collect()
    }

    fn estimate_poses(&self, images: &[Raster]) -> Result<Vec<PoseEstimate>, GatewayError> {
        self.require(Capability::EstimatePose)?;
        images
            .iter()
            .map(|img| self.read_json("pose", &content_key(ContentRef::Image(img))))
            .collect()
    }

    fn detect_landmarks(&self, images: &[Raster]) -> Result<Vec<LandmarkSet>, GatewayError> {
        self.require(Capability::DetectLandmarks)?;
        images
            .iter()
            .map(|img| self.read_json("landmarks", &content_key(ContentRef::Image(img))))
            .collect()
    }

    fn label_genders(&self, images: &[Raster]) -> Result<Vec<Gender>, GatewayError> {
        self.require(Capability::LabelGender)?;
        images
            .iter()
            .map(|img| self.read_json("gender", &content_key(ContentRef::Image(img))))
            .collect()
    }
}
