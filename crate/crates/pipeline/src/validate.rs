//! Manifest consistency checks. Every problem becomes one [`Violation`];
//! an empty list means the dataset is valid.

use std::collections::{BTreeMap, BTreeSet};

use morphforge_core::latent::EditMode;
use morphforge_core::{Gender, Split};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::dataset::Dataset;
use crate::manifest::{DatasetManifest, MANIFEST_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub kind: String,
    /// Subject, morph, pair or artifact the violation is about.
    pub item: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub message: String,
}

impl Violation {
    fn new(kind: &str, item: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            item: item.into(),
            path: None,
            message: message.into(),
        }
    }

    fn at(mut self, path: &str) -> Self {
        self.path = Some(path.to_string());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Format {
    Png,
    /// One SYNV row.
    Vector,
    Landmarks,
}

/// Checks `manifest` against the files under `ds` and against `config`.
pub fn validate_manifest(ds: &Dataset, manifest: &DatasetManifest, config: &PipelineConfig) -> Vec<Violation> {
    let mut v = Vec::new();
    if manifest.version != MANIFEST_VERSION {
        v.push(Violation::new(
            "version",
            "manifest",
            format!("version {} but this tool writes {MANIFEST_VERSION}", manifest.version),
        ));
    }
    if manifest.config_hash != config.hash() {
        v.push(Violation::new(
            "config_hash",
            "manifest",
            format!(
                "built with config {} but validating against {}",
                manifest.config_hash,
                config.hash()
            ),
        ));
    }

    let mut subjects = BTreeMap::new();
    for s in &manifest.subjects {
        if subjects.insert(s.subject_id.as_str(), s).is_some() {
            v.push(Violation::new("duplicate_id", &s.subject_id, "subject listed twice"));
        }
    }
    for split in Split::ALL {
        for g in Gender::ALL {
            let n = manifest
                .subjects
                .iter()
                .filter(|s| s.split == split && s.gender == g)
                .count();
            let want = config.counts.get(split);
            if n != want {
                v.push(Violation::new(
                    "split_size",
                    format!("{split}/{g}"),
                    format!("{n} subjects, config asks for {want}"),
                ));
            }
        }
    }

    // (item, path, format) for every referenced file.
    let mut files: Vec<(String, String, Format)> = Vec::new();
    for s in &manifest.subjects {
        let a = &s.artifacts;
        files.push((s.subject_id.clone(), a.image.clone(), Format::Png));
        files.push((s.subject_id.clone(), a.latent.clone(), Format::Vector));
        files.push((s.subject_id.clone(), a.embedding.clone(), Format::Vector));
        files.push((s.subject_id.clone(), a.landmarks.clone(), Format::Landmarks));
    }

    mated_checks(manifest, config, &subjects, &mut files, &mut v);
    pair_checks(manifest, config, &subjects, &mut v);

    let mut morph_ids = BTreeSet::new();
    for m in &manifest.morphs {
        let r = &m.record;
        if !morph_ids.insert(m.morph_id.as_str()) {
            v.push(Violation::new("duplicate_id", &m.morph_id, "morph listed twice"));
        }
        match (subjects.get(r.subject_a.as_str()), subjects.get(r.subject_b.as_str())) {
            (Some(a), Some(b)) => {
                if a.gender != b.gender {
                    v.push(Violation::new(
                        "cross_gender",
                        &m.morph_id,
                        format!("{} is {} but {} is {}", a.subject_id, a.gender, b.subject_id, b.gender),
                    ));
                } else if a.split != b.split {
                    v.push(Violation::new(
                        "cross_split",
                        &m.morph_id,
                        format!(
                            "{} is in {} but {} is in {}",
                            a.subject_id, a.split, b.subject_id, b.split
                        ),
                    ));
                } else if a.subject_id == b.subject_id {
                    v.push(Violation::new(
                        "self_morph",
                        &m.morph_id,
                        "both contributors are the same subject",
                    ));
                } else if m.split != a.split || m.gender != a.gender {
                    v.push(Violation::new(
                        "label_mismatch",
                        &m.morph_id,
                        format!(
                            "labelled {}/{} but contributors are {}/{}",
                            m.split, m.gender, a.split, a.gender
                        ),
                    ));
                }
            }
            _ => v.push(Violation::new(
                "unknown_subject",
                &m.morph_id,
                format!("contributors {} and {} are not both listed", r.subject_a, r.subject_b),
            )),
        }
        files.push((m.morph_id.clone(), r.output.clone(), Format::Png));
        if let Some(l) = &r.landmarks {
            files.push((m.morph_id.clone(), l.clone(), Format::Landmarks));
        }
    }
    for split in [Split::Dev, Split::Test] {
        for g in Gender::ALL {
            let n = manifest
                .subjects
                .iter()
                .filter(|s| s.split == split && s.gender == g)
                .count();
            let want = n * n.saturating_sub(1) / 2;
            let got = manifest
                .morphs
                .iter()
                .filter(|m| m.split == split && m.gender == g)
                .count();
            if got != want {
                v.push(Violation::new(
                    "morph_count",
                    format!("{split}/{g}"),
                    format!("{got} morphs, full pairing of {n} subjects gives {want}"),
                ));
            }
        }
    }

    let mut file_violations: Vec<Violation> = files
        .par_iter()
        .filter_map(|(item, path, format)| check_file(ds, item, path, *format))
        .collect();
    v.append(&mut file_violations);
    v
}

fn mated_checks(
    manifest: &DatasetManifest,
    config: &PipelineConfig,
    subjects: &BTreeMap<&str, &crate::manifest::SubjectRecord>,
    files: &mut Vec<(String, String, Format)>,
    v: &mut Vec<Violation>,
) {
    let expected = |mode: EditMode| match mode {
        EditMode::Ifgs => config.mated.ifgs.count,
        EditMode::Ifgd => config.mated.ifgd.count,
        EditMode::Frpca => config.mated.frpca.count,
    };
    let mut ids = BTreeSet::new();
    for (subject, modes) in &manifest.mated {
        if !subjects.contains_key(subject.as_str()) {
            v.push(Violation::new(
                "unknown_subject",
                subject,
                "mated samples for an unlisted subject",
            ));
        }
        for (mode, list) in modes {
            let want = expected(*mode);
            if list.samples.len() + list.dropped != want {
                v.push(Violation::new(
                    "mated_count",
                    format!("{subject}/{mode}"),
                    format!(
                        "{} kept + {} dropped, config asks for {want}",
                        list.samples.len(),
                        list.dropped
                    ),
                ));
            }
            for m in &list.samples {
                if !ids.insert(m.id.as_str()) {
                    v.push(Violation::new("duplicate_id", &m.id, "mated sample listed twice"));
                }
                let (ok, bound) = match mode {
                    EditMode::Frpca => (
                        m.distance > 0.0 && m.distance <= config.mated.frpca.tau,
                        config.mated.frpca.tau,
                    ),
                    _ => (
                        m.distance <= config.thresholds.preservation,
                        config.thresholds.preservation,
                    ),
                };
                if !ok {
                    v.push(Violation::new(
                        "identity_distance",
                        &m.id,
                        format!("distance {} to the base exceeds {bound}", m.distance),
                    ));
                }
                files.push((m.id.clone(), m.image.clone(), Format::Png));
                files.push((m.id.clone(), m.latent.clone(), Format::Vector));
            }
        }
    }
}

fn pair_checks(
    manifest: &DatasetManifest,
    config: &PipelineConfig,
    subjects: &BTreeMap<&str, &crate::manifest::SubjectRecord>,
    v: &mut Vec<Violation>,
) {
    let mut seen = BTreeSet::new();
    let mut chosen: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &manifest.pairs {
        let item = format!("{}__{}", p.subject_a, p.subject_b);
        let key = if p.subject_a <= p.subject_b {
            (p.subject_a.as_str(), p.subject_b.as_str())
        } else {
            (p.subject_b.as_str(), p.subject_a.as_str())
        };
        if !seen.insert(key) {
            v.push(Violation::new("duplicate_pair", &item, "pair listed twice"));
        }
        let (Some(a), Some(b)) = (subjects.get(p.subject_a.as_str()), subjects.get(p.subject_b.as_str())) else {
            v.push(Violation::new(
                "unknown_subject",
                &item,
                "pair names an unlisted subject",
            ));
            continue;
        };
        if a.gender != b.gender || a.split != b.split {
            v.push(Violation::new("pair_mismatch", &item, "pair crosses gender or split"));
        }
        if p.split == Split::Train {
            *chosen.entry(p.chosen_by.as_str()).or_default() += 1;
        }
    }
    for (subject, n) in chosen {
        if n > config.pairing.k {
            v.push(Violation::new(
                "pair_count",
                subject,
                format!("chose {n} partners, more than k = {}", config.pairing.k),
            ));
        }
    }
}

fn check_file(ds: &Dataset, item: &str, path: &str, format: Format) -> Option<Violation> {
    if !ds.exists(path) {
        return Some(Violation::new("missing_file", item, "referenced file does not exist").at(path));
    }
    let problem = match format {
        Format::Png => ds.read_png(path).err().map(|e| e.to_string()),
        Format::Landmarks => ds.read_landmarks(path).err().map(|e| e.to_string()),
        Format::Vector => ds.read_vector(path).err().map(|e| e.to_string()),
    };
    problem.map(|m| Violation::new("unreadable_file", item, m).at(path))
}
