//! On-disk layout of a dataset and artifact I/O.
//!
//! ```text
//! <root>/manifest.json
//! <root>/provenance.json
//! <root>/checkpoint.json          while base acceptance is incomplete
//! <root>/base/<subject>.{png,synv,emb.synv,landmarks.json}
//! <root>/mated/<mode>/<subject>/<id>.{png,synv}
//! <root>/mated/frpca/pca.synv
//! <root>/morphs/lma/<a>__<b>.{png,landmarks.json}
//! <root>/scores/
//! ```
//!
//! Paths stored in the manifest are relative to the root and use `/`.

use std::io::Write;
use std::path::{Path, PathBuf};

use morphforge_core::latent::{EditMode, LatentVector};
use morphforge_core::{Embedding, LandmarkSet, Raster, SynvBlock};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::PipelineError;

pub const MANIFEST: &str = "manifest.json";
pub const PROVENANCE: &str = "provenance.json";
pub const CHECKPOINT: &str = "checkpoint.json";

#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
}

impl Dataset {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Creates the top-level directories.
    pub fn create(&self) -> Result<(), PipelineError> {
        for dir in [
            "base",
            "mated/ifgs",
            "mated/ifgd",
            "mated/frpca",
            "morphs/lma",
            "scores",
        ] {
            let p = self.root.join(dir);
            std::fs::create_dir_all(&p).map_err(|e| PipelineError::io(&p, e))?;
        }
        Ok(())
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.path(rel).is_file()
    }

    pub fn write_bytes(&self, rel: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        write_atomic(&self.path(rel), bytes)
    }

    pub fn read_bytes(&self, rel: &str) -> Result<Vec<u8>, PipelineError> {
        let p = self.path(rel);
        std::fs::read(&p).map_err(|e| PipelineError::io(&p, e))
    }

    pub fn remove(&self, rel: &str) -> Result<(), PipelineError> {
        let p = self.path(rel);
        match std::fs::remove_file(&p) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(PipelineError::io(&p, e)),
            _ => Ok(()),
        }
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<(), PipelineError> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("serialisable");
        bytes.push(b'\n');
        self.write_bytes(rel, &bytes)
    }

    pub fn read_json<T: DeserializeOwned>(&self, rel: &str) -> Result<T, PipelineError> {
        serde_json::from_slice(&self.read_bytes(rel)?).map_err(|e| PipelineError::artifact(rel, e))
    }

    pub fn write_png(&self, rel: &str, image: &Raster) -> Result<(), PipelineError> {
        self.write_bytes(rel, &image.to_png_bytes()?)
    }

    pub fn read_png(&self, rel: &str) -> Result<Raster, PipelineError> {
        Raster::from_png_bytes(&self.read_bytes(rel)?).map_err(|e| PipelineError::artifact(rel, e))
    }

    pub fn write_vectors<R: AsRef<[f64]>>(&self, rel: &str, rows: &[R]) -> Result<(), PipelineError> {
        self.write_bytes(rel, &SynvBlock::from_rows(rows)?.encode()?)
    }

    pub fn read_vectors(&self, rel: &str) -> Result<Vec<Vec<f64>>, PipelineError> {
        Ok(SynvBlock::decode(&self.read_bytes(rel)?)
            .map_err(|e| PipelineError::artifact(rel, e))?
            .rows_f64())
    }

    pub fn read_vector(&self, rel: &str) -> Result<Vec<f64>, PipelineError> {
        let mut rows = self.read_vectors(rel)?;
        if rows.len() != 1 {
            return Err(PipelineError::artifact(
                rel,
                format!("expected one row, found {}", rows.len()),
            ));
        }
        Ok(rows.pop().unwrap())
    }

    pub fn read_latent(&self, rel: &str) -> Result<LatentVector, PipelineError> {
        LatentVector::new(self.read_vector(rel)?).map_err(|e| PipelineError::artifact(rel, e))
    }

    pub fn read_embedding(&self, rel: &str) -> Result<Embedding, PipelineError> {
        Ok(Embedding::new(self.read_vector(rel)?))
    }

    pub fn read_landmarks(&self, rel: &str) -> Result<LandmarkSet, PipelineError> {
        self.read_json(rel)
    }
}

/// Writes via a sibling temporary file and rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = std::fs::File::create(&tmp).map_err(|e| PipelineError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| PipelineError::io(&tmp, e))?;
    f.sync_all().map_err(|e| PipelineError::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| PipelineError::io(path, e))
}

pub fn base_stem(subject: &str) -> String {
    format!("base/{subject}")
}

pub fn mated_stem(mode: EditMode, subject: &str, id: &str) -> String {
    format!("mated/{mode}/{subject}/{id}")
}

pub fn morph_stem(a: &str, b: &str) -> String {
    format!("morphs/lma/{a}__{b}")
}

pub const PCA_AXES: &str = "mated/frpca/pca.synv";
