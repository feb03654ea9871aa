//! Mated samples: edited renditions of each base identity.
//!
//! IFGS and IFGD walk fixed scale grids and keep only outputs that pass the
//! preservation check. FRPCA searches its own scale under the identity
//! budget, so its outputs are kept as produced.

use std::collections::BTreeMap;

use morphforge_core::gates::{cosine_distance, preservation_check};
use morphforge_core::latent::{
    edit_frpca, edit_ifgd, edit_ifgs, fit_pca, EditMode, EditRecipe, LatentVector, SemanticDirection,
};
use morphforge_core::{Embedding, SynvBlock};
use morphforge_gateway::{GatewayError, ProviderExt};
use rayon::prelude::*;

use crate::dataset::{mated_stem, PCA_AXES};
use crate::manifest::{stamp, DatasetManifest, FailureRecord, FrpcaInfo, MatedList, MatedRecord, SubjectRecord};
use crate::{derive_seed, Pipeline, PipelineError};

struct SubjectResult {
    list: MatedList,
    failures: Vec<FailureRecord>,
}

impl Pipeline {
    /// Recipes of the IFGS or IFGD grid, in a fixed order.
    pub fn recipes(&self, mode: EditMode) -> Vec<EditRecipe> {
        let m = &self.config.mated;
        let mut out = Vec::new();
        match mode {
            EditMode::Ifgs => {
                for i in m.ifgs.illumination.values() {
                    for a in m.ifgs.age.values() {
                        out.push(EditRecipe::new(mode, [("illumination", i), ("age", a)]));
                    }
                }
            }
            EditMode::Ifgd => {
                let g = &m.ifgd;
                for p in g.pose.values() {
                    for e in g.expression.values() {
                        for i in g.illumination.values() {
                            for a in g.age.values() {
                                out.push(EditRecipe::new(
                                    mode,
                                    [("pose", p), ("expression", e), ("illumination", i), ("age", a)],
                                ));
                            }
                        }
                    }
                }
            }
            EditMode::Frpca => {}
        }
        out
    }

    fn apply_recipe(&self, base: &LatentVector, recipe: &EditRecipe) -> Result<LatentVector, PipelineError> {
        Ok(match recipe.mode {
            EditMode::Ifgs => {
                let scale = |name: &str| {
                    recipe
                        .terms
                        .iter()
                        .find(|t| t.attribute == name)
                        .map_or(0.0, |t| t.scale)
                };
                edit_ifgs(
                    base,
                    self.directions.get("illumination")?,
                    self.directions.get("age")?,
                    scale("illumination"),
                    scale("age"),
                )?
            }
            _ => edit_ifgd(base, recipe, &self.directions)?,
        })
    }

    /// Decodes and embeds `latent`; `None` if the provider finds no face.
    fn render(&self, latent: &LatentVector) -> Result<Option<(Vec<u8>, Embedding)>, PipelineError> {
        let p = self.provider.as_ref();
        let image = p.decode_latent(latent)?;
        match p.embed_face(&image) {
            Ok(e) => Ok(Some((image.to_png_bytes()?, e))),
            Err(GatewayError::NoFace { .. }) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn store(
        &self,
        mode: EditMode,
        subject: &str,
        id: &str,
        png: &[u8],
        latent: &LatentVector,
    ) -> Result<(String, String), PipelineError> {
        let stem = mated_stem(mode, subject, id);
        let (image, latent_path) = (format!("{stem}.png"), format!("{stem}.synv"));
        self.dataset.write_bytes(&image, png)?;
        self.dataset.write_vectors(&latent_path, &[latent.values()])?;
        Ok((image, latent_path))
    }

    fn grid_subject(
        &self,
        s: &SubjectRecord,
        mode: EditMode,
        recipes: &[EditRecipe],
    ) -> Result<SubjectResult, PipelineError> {
        let base = self.dataset.read_latent(&s.artifacts.latent)?;
        let base_emb = self.dataset.read_embedding(&s.artifacts.embedding)?;
        let threshold = self.config.thresholds.preservation;
        let mut list = MatedList::default();
        for (k, recipe) in recipes.iter().enumerate() {
            let id = format!("{}_{mode}_{k:03}", s.subject_id);
            let w = self.apply_recipe(&base, recipe)?;
            let Some((png, emb)) = self.render(&w)? else {
                list.dropped += 1;
                continue;
            };
            if !preservation_check(&base_emb, &emb, threshold)? {
                list.dropped += 1;
                continue;
            }
            let (image, latent) = self.store(mode, &s.subject_id, &id, &png, &w)?;
            list.samples.push(MatedRecord {
                id,
                image,
                latent,
                distance: cosine_distance(&base_emb, &emb)?,
                recipe: Some(recipe.clone()),
                frpca: None,
            });
        }
        Ok(SubjectResult {
            list,
            failures: Vec::new(),
        })
    }

    fn frpca_subject(&self, s: &SubjectRecord, axes: &[SemanticDirection]) -> Result<SubjectResult, PipelineError> {
        let base = self.dataset.read_latent(&s.artifacts.latent)?;
        let cfg = self.config.mated.frpca;
        let mut list = MatedList::default();
        let mut failures = Vec::new();
        for j in 0..cfg.count {
            let id = format!("{}_frpca_{j:03}", s.subject_id);
            let seed = derive_seed(self.config.seed, &format!("frpca/{}", s.subject_id), j as u64);
            let p = self.provider.as_ref();
            let oracle = |w: &LatentVector| -> Result<Embedding, Box<dyn std::error::Error + Send + Sync>> {
                Ok(p.embed_face(&p.decode_latent(w)?)?)
            };
            let edit = match edit_frpca(&base, axes, seed, oracle, cfg.tau) {
                Ok(e) => e,
                Err(e) => {
                    list.dropped += 1;
                    failures.push(FailureRecord {
                        stage: "mate/frpca".into(),
                        item: id,
                        message: e.to_string(),
                    });
                    continue;
                }
            };
            let Some((png, _)) = self.render(&edit.latent)? else {
                list.dropped += 1;
                continue;
            };
            let (image, latent) = self.store(EditMode::Frpca, &s.subject_id, &id, &png, &edit.latent)?;
            list.samples.push(MatedRecord {
                id,
                image,
                latent,
                distance: edit.distance,
                recipe: None,
                frpca: Some(FrpcaInfo {
                    seed,
                    scale: edit.scale,
                }),
            });
        }
        Ok(SubjectResult { list, failures })
    }

    /// Principal axes for FRPCA, fitted on freshly sampled latents and saved
    /// beside the mated samples.
    fn pca_axes(&self) -> Result<Vec<SemanticDirection>, PipelineError> {
        let cfg = self.config.mated.frpca;
        let latents = self
            .provider
            .sample_latents(cfg.pca_samples, derive_seed(self.config.seed, "pca", 0))?;
        let fit = fit_pca(&latents, cfg.components)?;
        let rows: Vec<&[f64]> = fit.components.iter().map(|d| d.normal()).collect();
        self.dataset
            .write_bytes(PCA_AXES, &SynvBlock::from_rows(&rows)?.encode()?)?;
        Ok(fit.components)
    }

    /// Generates `mode` samples for every subject and records them.
    pub fn mate(&self, mode: EditMode) -> Result<DatasetManifest, PipelineError> {
        let ds = &self.dataset;
        let mut manifest = self.load_manifest()?;
        if manifest.subjects.is_empty() {
            tracing::warn!("manifest has no subjects; nothing to mate");
        }
        let recipes = self.recipes(mode);
        let axes = if mode == EditMode::Frpca && self.config.mated.frpca.count > 0 && !manifest.subjects.is_empty() {
            self.pca_axes()?
        } else {
            Vec::new()
        };
        for s in &manifest.subjects {
            let dir = ds.path(&format!("mated/{mode}/{}", s.subject_id));
            if dir.exists() {
                std::fs::remove_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
            }
        }
        let results: Vec<Result<SubjectResult, PipelineError>> = self.install(|| {
            manifest
                .subjects
                .par_iter()
                .map(|s| match mode {
                    EditMode::Frpca => self.frpca_subject(s, &axes),
                    _ => self.grid_subject(s, mode, &recipes),
                })
                .collect()
        });

        let stage = format!("mate/{mode}");
        manifest.clear_failures(&stage);
        let mut per_subject = BTreeMap::new();
        for (s, r) in manifest.subjects.iter().zip(results) {
            let r = r?;
            tracing::info!(
                subject = %s.subject_id,
                kept = r.list.samples.len(),
                dropped = r.list.dropped,
                "{mode} done"
            );
            per_subject.insert(s.subject_id.clone(), r.list);
            manifest.failures.extend(r.failures);
        }
        for (id, list) in per_subject {
            manifest.mated.entry(id).or_default().insert(mode, list);
        }
        manifest.save(ds)?;
        stamp(ds, &stage)?;
        Ok(manifest)
    }
}
