use morphforge_core::morph::{
    demorph, lmfd_verify, morph_geometry, morph_pair, splice_postprocess, LmfdDecision, MorphAlgorithm, MorphRecord,
};
use morphforge_core::{LandmarkSet, Raster};
use morphforge_gateway::{Provider, ProviderExt};
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::morph_stem;
use crate::manifest::{stamp, DatasetManifest, FailureRecord, MorphEntry, PairRecord};
use crate::{Pipeline, PipelineError};

pub const MORPH_STAGE: &str = "morph";

impl Pipeline {
    fn morph_one(
        &self,
        manifest: &DatasetManifest,
        pair: &PairRecord,
        alpha: f64,
    ) -> Result<MorphEntry, PipelineError> {
        let ds = &self.dataset;
        let subject = |id: &str| {
            manifest
                .subject(id)
                .ok_or_else(|| PipelineError::Manifest(format!("pair names unknown subject {id}")))
        };
        let (sa, sb) = (subject(&pair.subject_a)?, subject(&pair.subject_b)?);
        let a = ds.read_png(&sa.artifacts.image)?;
        let b = ds.read_png(&sb.artifacts.image)?;
        let la = ds.read_landmarks(&sa.artifacts.landmarks)?;
        let lb = ds.read_landmarks(&sb.artifacts.landmarks)?;
        let blended = morph_pair(&a, &la, &b, &lb, alpha)?;
        let geometry = morph_geometry(&la, &lb, alpha, a.width(), a.height());
        let image = splice_postprocess(&blended, &a, &geometry, self.config.morph.feather_px)?;

        let stem = morph_stem(&pair.subject_a, &pair.subject_b);
        let (output, landmarks) = (format!("{stem}.png"), format!("{stem}.landmarks.json"));
        ds.write_png(&output, &image)?;
        ds.write_json(&landmarks, &geometry)?;
        Ok(MorphEntry {
            morph_id: format!("{}__{}", pair.subject_a, pair.subject_b),
            split: pair.split,
            gender: pair.gender,
            record: MorphRecord {
                subject_a: pair.subject_a.clone(),
                subject_b: pair.subject_b.clone(),
                algorithm: MorphAlgorithm::Lma,
                alpha,
                output,
                landmarks: Some(landmarks),
            },
        })
    }

    /// One landmark morph per recorded pair. A pair that fails is recorded
    /// in the manifest's failure list and the rest carry on.
    pub fn morph(&self, alpha: f64) -> Result<DatasetManifest, PipelineError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(PipelineError::Config(format!("alpha {alpha} outside [0, 1]")));
        }
        let mut manifest = self.load_manifest()?;
        let results: Vec<_> = self.install(|| {
            manifest
                .pairs
                .par_iter()
                .map(|p| self.morph_one(&manifest, p, alpha))
                .collect()
        });
        manifest.clear_failures(MORPH_STAGE);
        let mut morphs = Vec::with_capacity(results.len());
        for (pair, r) in manifest.pairs.iter().zip(results) {
            match r {
                Ok(m) => morphs.push(m),
                Err(e) => {
                    let item = format!("{}__{}", pair.subject_a, pair.subject_b);
                    tracing::warn!(%item, "morph failed: {e}");
                    manifest.failures.push(FailureRecord {
                        stage: MORPH_STAGE.into(),
                        item,
                        message: e.to_string(),
                    });
                }
            }
        }
        tracing::info!(morphs = morphs.len(), "morphing done");
        manifest.morphs = morphs;
        manifest.save(&self.dataset)?;
        stamp(&self.dataset, MORPH_STAGE)?;
        Ok(manifest)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DemorphReport {
    pub factor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decision: Option<LmfdDecision>,
}

/// Reverses a suspected morph against a trusted probe. With a verification
/// `threshold`, also compares the result's identity with the probe's.
#[allow(clippy::too_many_arguments)]
pub fn demorph_images(
    provider: &dyn Provider,
    suspect: &Raster,
    suspect_landmarks: Option<LandmarkSet>,
    probe: &Raster,
    probe_landmarks: Option<LandmarkSet>,
    factor: f64,
    threshold: Option<f64>,
) -> Result<(Raster, DemorphReport), PipelineError> {
    let ls = match suspect_landmarks {
        Some(l) => l,
        None => provider.detect_landmarks_one(suspect)?,
    };
    let lp = match probe_landmarks {
        Some(l) => l,
        None => provider.detect_landmarks_one(probe)?,
    };
    let out = demorph(suspect, &ls, probe, &lp, factor)?;
    let mut report = DemorphReport {
        factor,
        distance: None,
        decision: None,
    };
    if let Some(t) = threshold {
        let (decision, d) = lmfd_verify(&provider.embed_face(&out)?, &provider.embed_face(probe)?, t)?;
        report.distance = Some(d);
        report.decision = Some(decision);
    }
    Ok((out, report))
}
