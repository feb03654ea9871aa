//! Base acceptance: draw candidates, neutralise, decode and gate them, then
//! admit survivors one at a time against the growing identity gallery.
//!
//! Candidates are drawn in fixed-size rounds. Each round is prepared in
//! parallel (decode, pose, landmarks, eye and glasses gates, embedding) and
//! committed serially in candidate order, so the diversity check always sees
//! every identity admitted before it and results do not depend on thread
//! count. A checkpoint is written after every round.

use morphforge_core::gates::{
    cosine_distance, diversity_check, eye_aspect_ratios, glasses_check, pose_gate_with, GlassesVerdict,
};
use morphforge_core::latent::{neutralize, LatentVector};
use morphforge_core::{Embedding, Gender, LandmarkSet, PoseEstimate, Split};
use morphforge_gateway::{GatewayError, ProviderExt};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{base_stem, CHECKPOINT};
use crate::manifest::{stamp, DatasetManifest, GateMetadata, SubjectArtifacts, SubjectRecord};
use crate::provider::GenderSource;
use crate::{derive_seed, Pipeline, PipelineError, Shortfall};

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    config_hash: String,
    next_round: u64,
    manifest: DatasetManifest,
}

/// Gate that stopped a candidate; also the key of its rejection tally.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    NoFace,
    Pose,
    EyesClosed,
    Glasses,
    Unlabelled,
    GenderFull,
    Diversity,
}

impl Rejection {
    pub fn as_str(&self) -> &'static str {
        match self {
            Rejection::NoFace => "no_face",
            Rejection::Pose => "pose",
            Rejection::EyesClosed => "eyes_closed",
            Rejection::Glasses => "glasses",
            Rejection::Unlabelled => "unlabelled",
            Rejection::GenderFull => "gender_full",
            Rejection::Diversity => "diversity",
        }
    }
}

struct Candidate {
    latent: LatentVector,
    png: Vec<u8>,
    gender: Gender,
    pose: PoseEstimate,
    landmarks: LandmarkSet,
    ear: [f64; 2],
    glasses: GlassesVerdict,
    embedding: Embedding,
}

fn gender_slot(g: Gender) -> usize {
    match g {
        Gender::F => 0,
        Gender::M => 1,
    }
}

fn id_prefix(g: Gender) -> char {
    match g {
        Gender::F => 'f',
        Gender::M => 'm',
    }
}

impl Pipeline {
    fn split_for(&self, nth: usize) -> Split {
        let c = &self.config.counts;
        if nth < c.train {
            Split::Train
        } else if nth < c.train + c.dev {
            Split::Dev
        } else {
            Split::Test
        }
    }

    fn prepare(
        &self,
        genders: &GenderSource,
        index: u64,
        raw: &LatentVector,
    ) -> Result<Result<Candidate, Rejection>, PipelineError> {
        let d = &self.directions;
        let (pose_dir, illum, expr) = (d.get("pose")?, d.get("illumination")?, d.get("expression")?);
        let latent = neutralize(raw, pose_dir, illum, expr, expr.mean_distance_neg)?;
        let p = self.provider.as_ref();
        let image = p.decode_latent(&latent)?;
        let t = &self.config.thresholds;
        let no_face = |e: GatewayError| match e {
            GatewayError::NoFace { .. } => Ok(Err(Rejection::NoFace)),
            other => Err(PipelineError::from(other)),
        };
        let pose = match p.estimate_pose(&image) {
            Ok(pose) => pose,
            Err(e) => return no_face(e),
        };
        if !pose_gate_with(&pose, t.pose_deg) {
            return Ok(Err(Rejection::Pose));
        }
        let landmarks = match p.detect_landmarks_one(&image) {
            Ok(l) => l,
            Err(e) => return no_face(e),
        };
        let (right, left) = eye_aspect_ratios(&landmarks)?;
        if right < t.ear_min || left < t.ear_min {
            return Ok(Err(Rejection::EyesClosed));
        }
        let glasses = glasses_check(&image, &landmarks, t.glasses_density, self.config.canny.into())?;
        if glasses.flagged() {
            return Ok(Err(Rejection::Glasses));
        }
        let Some(gender) = genders.label(p, index, &image)? else {
            return Ok(Err(Rejection::Unlabelled));
        };
        let embedding = match p.embed_face(&image) {
            Ok(e) => e,
            Err(e) => return no_face(e),
        };
        Ok(Ok(Candidate {
            latent,
            png: image.to_png_bytes()?,
            gender,
            pose,
            landmarks,
            ear: [right, left],
            glasses,
            embedding,
        }))
    }

    fn commit(
        &self,
        c: Candidate,
        index: u64,
        nth: usize,
        nearest: Option<f64>,
    ) -> Result<SubjectRecord, PipelineError> {
        let subject_id = format!("{}{nth:05}", id_prefix(c.gender));
        let stem = base_stem(&subject_id);
        let artifacts = SubjectArtifacts {
            image: format!("{stem}.png"),
            latent: format!("{stem}.synv"),
            embedding: format!("{stem}.emb.synv"),
            landmarks: format!("{stem}.landmarks.json"),
        };
        let ds = &self.dataset;
        ds.write_bytes(&artifacts.image, &c.png)?;
        ds.write_vectors(&artifacts.latent, &[c.latent.values()])?;
        ds.write_vectors(&artifacts.embedding, &[c.embedding.values()])?;
        ds.write_json(&artifacts.landmarks, &c.landmarks)?;
        Ok(SubjectRecord {
            subject_id,
            gender: c.gender,
            split: self.split_for(nth),
            candidate: index,
            artifacts,
            gates: GateMetadata {
                pose: c.pose,
                ear: c.ear,
                glasses: c.glasses,
                nearest_distance: nearest,
            },
        })
    }

    /// Runs (or resumes) base acceptance and writes the manifest.
    pub fn gen_base(&self) -> Result<DatasetManifest, PipelineError> {
        let ds = &self.dataset;
        ds.create()?;
        let hash = self.config.hash();
        let genders = GenderSource::from_config(&self.config, self.provider.as_ref())?;

        let (mut manifest, mut round) = if ds.exists(CHECKPOINT) {
            let cp: Checkpoint = ds.read_json(CHECKPOINT)?;
            if cp.config_hash != hash {
                return Err(PipelineError::Manifest(format!(
                    "{CHECKPOINT} was written under config {}; remove it to start over",
                    cp.config_hash
                )));
            }
            tracing::info!(
                round = cp.next_round,
                subjects = cp.manifest.subjects.len(),
                "resuming base acceptance"
            );
            (cp.manifest, cp.next_round)
        } else {
            (DatasetManifest::new(hash.clone()), 0)
        };

        let target = self.config.counts.per_gender();
        let mut have = [0usize; 2];
        let mut gallery = Vec::with_capacity(manifest.subjects.len());
        for s in &manifest.subjects {
            have[gender_slot(s.gender)] += 1;
            gallery.push(ds.read_embedding(&s.artifacts.embedding)?);
        }

        let batch = self.config.acceptance.batch;
        let budget = self.config.acceptance.budget as u64;
        let threshold = self.config.thresholds.diversity;
        while have.iter().any(|&n| n < target) {
            if manifest.acceptance.candidates >= budget {
                manifest.save(ds)?;
                let shortfall = self.shortfall(&have, target);
                return Err(PipelineError::BudgetExhausted {
                    budget: budget as usize,
                    accepted: manifest.subjects.len(),
                    shortfall,
                });
            }
            let first = round * batch as u64;
            let latents = self
                .provider
                .sample_latents(batch, derive_seed(self.config.seed, "sample", round))?;
            if latents.len() != batch {
                return Err(PipelineError::Provider(GatewayError::Malformed(format!(
                    "asked for {batch} latents, got {}",
                    latents.len()
                ))));
            }
            let room = (budget - manifest.acceptance.candidates).min(batch as u64) as usize;
            let prepared: Vec<_> = self.install(|| {
                latents[..room]
                    .par_iter()
                    .enumerate()
                    .map(|(j, w)| self.prepare(&genders, first + j as u64, w))
                    .collect()
            });
            // A provider failure aborts before this round commits anything.
            let prepared = match prepared.into_iter().collect::<Result<Vec<_>, _>>() {
                Ok(p) => p,
                Err(e) => {
                    manifest.save(ds)?;
                    return Err(e);
                }
            };

            let mut round_state = manifest.clone();
            let mut round_have = have;
            let mut round_gallery = gallery.clone();
            for (j, outcome) in prepared.into_iter().enumerate() {
                if round_have.iter().all(|&n| n >= target) {
                    break;
                }
                let index = first + j as u64;
                round_state.acceptance.candidates += 1;
                let verdict = match outcome {
                    Err(r) => Err(r),
                    Ok(c) if round_have[gender_slot(c.gender)] >= target => Err(Rejection::GenderFull),
                    Ok(c) => {
                        if diversity_check(&c.embedding, &round_gallery, threshold)?.accepted() {
                            Ok(c)
                        } else {
                            Err(Rejection::Diversity)
                        }
                    }
                };
                match verdict {
                    Err(r) => {
                        *round_state
                            .acceptance
                            .rejected
                            .entry(r.as_str().to_string())
                            .or_default() += 1
                    }
                    Ok(c) => {
                        let nearest = round_gallery
                            .iter()
                            .map(|g| cosine_distance(&c.embedding, g))
                            .try_fold(None::<f64>, |m, d| d.map(|d| Some(m.map_or(d, |m| m.min(d)))))?;
                        let slot = gender_slot(c.gender);
                        round_gallery.push(c.embedding.clone());
                        let record = self.commit(c, index, round_have[slot], nearest)?;
                        tracing::debug!(subject = %record.subject_id, candidate = index, "accepted");
                        round_have[slot] += 1;
                        round_state.subjects.push(record);
                    }
                }
            }
            manifest = round_state;
            have = round_have;
            gallery = round_gallery;
            round += 1;
            ds.write_json(
                CHECKPOINT,
                &Checkpoint {
                    config_hash: hash.clone(),
                    next_round: round,
                    manifest: manifest.clone(),
                },
            )?;
            tracing::info!(
                candidates = manifest.acceptance.candidates,
                accepted = manifest.subjects.len(),
                "round {round} committed"
            );
        }

        // Subjects of one gender and split are contiguous and in id order.
        manifest
            .subjects
            .sort_by(|a, b| (a.gender, &a.subject_id).cmp(&(b.gender, &b.subject_id)));
        manifest.save(ds)?;
        ds.remove(CHECKPOINT)?;
        stamp(ds, "gen-base")?;
        Ok(manifest)
    }

    fn shortfall(&self, have: &[usize; 2], target: usize) -> Vec<Shortfall> {
        let mut out = Vec::new();
        for g in Gender::ALL {
            let n = have[gender_slot(g)];
            let mut start = 0;
            for split in Split::ALL {
                let want = self.config.counts.get(split);
                let got = n.saturating_sub(start).min(want);
                if got < want {
                    out.push(Shortfall {
                        split,
                        gender: g,
                        missing: want - got,
                    });
                }
                start += want;
            }
        }
        debug_assert!(out.iter().map(|s| s.missing).sum::<usize>() == 2 * target - have.iter().sum::<usize>());
        out
    }
}
