//! Morphing Attack Potential: success rates of a morph over repeated
//! verification attempts against several recognition systems.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::EvalError;

/// One comparison of a mated sample of a contributor against a morph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptScore {
    pub morph_id: String,
    /// Contributor slot, 1 or 2.
    pub slot: u8,
    /// 1-based attempt number.
    pub attempt: u32,
    pub frs_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContributorPolicy {
    /// Every contributor must be verified.
    #[default]
    Both,
    /// One verified contributor suffices.
    Either,
}

/// `cells[r - 1][c - 1]`: fraction of morphs accepted in at least `r`
/// attempts by at least `c` systems.
#[derive(Debug, Clone, PartialEq)]
pub struct MapMatrix {
    pub frs: Vec<String>,
    pub cells: Vec<Vec<f64>>,
}

impl MapMatrix {
    pub fn attempts(&self) -> usize {
        self.cells.len()
    }

    pub fn systems(&self) -> usize {
        self.frs.len()
    }

    pub fn cell(&self, r: usize, c: usize) -> f64 {
        self.cells[r - 1][c - 1]
    }
}

pub fn compute_map(
    scores: &[AttemptScore],
    thresholds: &BTreeMap<String, f64>,
    policy: ContributorPolicy,
) -> Result<MapMatrix, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::Empty("attempt scores"));
    }
    // morph -> frs -> slot -> successful attempts
    let mut table: BTreeMap<&str, BTreeMap<&str, BTreeMap<u8, u32>>> = BTreeMap::new();
    let mut slots: BTreeMap<&str, BTreeSet<u8>> = BTreeMap::new();
    let mut systems: BTreeSet<&str> = BTreeSet::new();
    let mut seen = BTreeSet::new();
    let mut max_attempt = 0;
    for s in scores {
        if !s.score.is_finite() {
            return Err(EvalError::NonFinite(format!(
                "score of {} attempt {}",
                s.morph_id, s.attempt
            )));
        }
        if s.attempt == 0 || !(1..=2).contains(&s.slot) {
            return Err(EvalError::Invalid(format!(
                "morph {}: slot {} attempt {} (slots are 1|2, attempts start at 1)",
                s.morph_id, s.slot, s.attempt
            )));
        }
        let threshold = *thresholds
            .get(&s.frs_id)
            .ok_or_else(|| EvalError::UnknownSystem(s.frs_id.clone()))?;
        if !seen.insert((s.morph_id.as_str(), s.slot, s.attempt, s.frs_id.as_str())) {
            return Err(EvalError::Invalid(format!(
                "duplicate row for morph {} slot {} attempt {} on {}",
                s.morph_id, s.slot, s.attempt, s.frs_id
            )));
        }
        max_attempt = max_attempt.max(s.attempt);
        systems.insert(&s.frs_id);
        slots.entry(&s.morph_id).or_default().insert(s.slot);
        let hits = table
            .entry(&s.morph_id)
            .or_default()
            .entry(&s.frs_id)
            .or_default()
            .entry(s.slot)
            .or_default();
        if s.score >= threshold {
            *hits += 1;
        }
    }

    let rows = max_attempt as usize;
    let cols = systems.len();
    let mut counts = vec![vec![0usize; cols]; rows];
    for (morph, per_frs) in &table {
        let listed = &slots[morph];
        let mut levels = Vec::with_capacity(cols);
        for frs in &systems {
            let per_slot = per_frs
                .get(frs)
                .ok_or_else(|| EvalError::Invalid(format!("morph {morph} has no attempts on {frs}")))?;
            let mut hits = Vec::with_capacity(listed.len());
            for slot in listed {
                hits.push(*per_slot.get(slot).ok_or_else(|| {
                    EvalError::Invalid(format!("morph {morph} has no slot {slot} attempts on {frs}"))
                })?);
            }
            // Highest attempt count r this system reaches for the morph.
            let level = match policy {
                ContributorPolicy::Both => hits.iter().copied().min().unwrap_or(0),
                ContributorPolicy::Either => hits.iter().copied().max().unwrap_or(0),
            };
            levels.push(level as usize);
        }
        for (r, row) in counts.iter_mut().enumerate() {
            let passing = levels.iter().filter(|&&l| l > r).count();
            for cell in row.iter_mut().take(passing) {
                *cell += 1;
            }
        }
    }
    let morphs = table.len() as f64;
    Ok(MapMatrix {
        frs: systems.into_iter().map(str::to_string).collect(),
        cells: counts
            .into_iter()
            .map(|row| row.into_iter().map(|n| n as f64 / morphs).collect())
            .collect(),
    })
}
