use morphforge_core::pairing::{select_pairs, PairingMode, SubjectEntry};
use morphforge_core::Split;

use crate::manifest::{stamp, DatasetManifest, PairRecord};
use crate::{Pipeline, PipelineError};

impl Pipeline {
    /// Pairs same-gender subjects within each split. `train` applies to the
    /// training split; development and test always pair fully.
    pub fn pair(&self, train: PairingMode) -> Result<DatasetManifest, PipelineError> {
        let mut manifest = self.load_manifest()?;
        let entries = manifest
            .subjects
            .iter()
            .map(|s| {
                Ok(SubjectEntry {
                    subject_id: s.subject_id.clone(),
                    gender: s.gender,
                    split: s.split,
                    embedding: self.dataset.read_embedding(&s.artifacts.embedding)?,
                })
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;

        let mut pairs = Vec::new();
        for split in Split::ALL {
            let mode = if split == Split::Train {
                train
            } else {
                PairingMode::Full
            };
            let members: Vec<SubjectEntry> = entries.iter().filter(|e| e.split == split).cloned().collect();
            let outcome = select_pairs(&members, split, mode)?;
            for w in &outcome.warnings {
                tracing::warn!(%split, "{w}");
            }
            for p in outcome.pairs {
                let gender = manifest
                    .subject(&p.subject_a)
                    .map(|s| s.gender)
                    .expect("pairs name listed subjects");
                pairs.push(PairRecord {
                    split,
                    gender,
                    subject_a: p.subject_a,
                    subject_b: p.subject_b,
                    similarity: p.similarity,
                    chosen_by: p.chosen_by,
                });
            }
            tracing::info!(%split, pairs = pairs.iter().filter(|p| p.split == split).count(), "paired");
        }
        manifest.pairs = pairs;
        manifest.save(&self.dataset)?;
        stamp(&self.dataset, "pair")?;
        Ok(manifest)
    }
}
