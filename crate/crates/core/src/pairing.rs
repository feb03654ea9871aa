//! Morph contributor pairing by embedding similarity.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gates::{cosine_similarity, GateError};
use crate::types::{Embedding, Gender, Split};

#[derive(Debug, Error)]
pub enum PairingError {
    #[error("duplicate subject id {0}")]
    DuplicateSubject(String),
    #[error("subject {id} belongs to split {actual}, not {requested}")]
    WrongSplit {
        id: String,
        actual: Split,
        requested: Split,
    },
    #[error("top-k pairing needs k >= 1")]
    ZeroK,
    #[error("subject {id}: {source}")]
    Embedding {
        id: String,
        #[source]
        source: GateError,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectEntry {
    pub subject_id: String,
    pub gender: Gender,
    pub split: Split,
    pub embedding: Embedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairingMode {
    /// Each subject contributes its `k` most similar unpaired partners.
    TopK(usize),
    /// Every same-gender combination.
    Full,
}

/// Unordered pair; `subject_a < subject_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub subject_a: String,
    pub subject_b: String,
    pub similarity: f64,
    /// Subject whose top-k list added the pair (`subject_a` in full mode).
    pub chosen_by: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairingOutcome {
    pub pairs: Vec<Pair>,
    pub warnings: Vec<String>,
}

/// Pairs subjects of one split within each gender.
///
/// In `TopK` mode subjects are visited in id order; each walks its partners
/// from most to least similar (ties by id), skipping pairs that already
/// exist, until it has added `k` pairs of its own or runs out. Every subject
/// therefore ends up in at least `min(k, n - 1)` pairs and no pair appears
/// twice in either orientation.
#[allow(clippy::needless_range_loop)]
pub fn select_pairs(
    subjects: &[SubjectEntry],
    split: Split,
    mode: PairingMode,
) -> Result<PairingOutcome, PairingError> {
    if mode == PairingMode::TopK(0) {
        return Err(PairingError::ZeroK);
    }
    let mut seen = BTreeSet::new();
    for s in subjects {
        if !seen.insert(s.subject_id.as_str()) {
            return Err(PairingError::DuplicateSubject(s.subject_id.clone()));
        }
        if s.split != split {
            return Err(PairingError::WrongSplit {
                id: s.subject_id.clone(),
                actual: s.split,
                requested: split,
            });
        }
    }

    let mut outcome = PairingOutcome::default();
    for gender in Gender::ALL {
        let mut group: Vec<&SubjectEntry> = subjects.iter().filter(|s| s.gender == gender).collect();
        if group.is_empty() {
            continue;
        }
        if group.len() < 2 {
            outcome.warnings.push(format!(
                "{split}/{gender}: only {} subject, no pairs formed",
                group.len()
            ));
            continue;
        }
        group.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
        let n = group.len();
        let mut sim = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let s = cosine_similarity(&group[i].embedding, &group[j].embedding).map_err(|source| {
                    PairingError::Embedding {
                        id: group[i].subject_id.clone(),
                        source,
                    }
                })?;
                sim[i][j] = s;
                sim[j][i] = s;
            }
        }

        // (i, j) -> (similarity, chooser)
        let mut chosen: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
        match mode {
            PairingMode::TopK(k) if k < n - 1 => {
                for i in 0..n {
                    let mut partners: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                    // Similarity descending, then id ascending (group is id-sorted).
                    partners.sort_by(|&x, &y| sim[i][y].partial_cmp(&sim[i][x]).unwrap().then(x.cmp(&y)));
                    let mut added = 0;
                    for j in partners {
                        if added == k {
                            break;
                        }
                        let key = (i.min(j), i.max(j));
                        if let std::collections::btree_map::Entry::Vacant(e) = chosen.entry(key) {
                            e.insert((sim[i][j], i));
                            added += 1;
                        }
                    }
                }
            }
            _ => {
                for i in 0..n {
                    for j in i + 1..n {
                        chosen.insert((i, j), (sim[i][j], i));
                    }
                }
            }
        }
        outcome
            .pairs
            .extend(chosen.into_iter().map(|((i, j), (similarity, by))| Pair {
                subject_a: group[i].subject_id.clone(),
                subject_b: group[j].subject_id.clone(),
                similarity,
                chosen_by: group[by].subject_id.clone(),
            }));
    }
    Ok(outcome)
}
