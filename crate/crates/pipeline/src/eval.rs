//! Score files in, plot tables out.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use morphforge_core::evaluation::io::{
    read_attempt_scores, read_detection_scores, read_quality_scores, split_detection, subset_values, subsets,
    write_det_csv, write_kde_csv, write_kld_csv, write_map_csv, KlRow,
};
use morphforge_core::evaluation::{
    compute_map, det_curve_with, kde_table, kl_divergence, silverman_bandwidth, ContributorPolicy, EvalError, Polarity,
};

use crate::PipelineError;

fn open(path: &Path) -> Result<File, PipelineError> {
    File::open(path).map_err(|e| PipelineError::io(path, e))
}

/// Vulnerability matrix from `morph_id,slot,attempt,frs_id,score` rows.
pub fn map_table(
    scores: &Path,
    thresholds: &BTreeMap<String, f64>,
    policy: ContributorPolicy,
) -> Result<Vec<u8>, PipelineError> {
    let rows = read_attempt_scores(open(scores)?)?;
    let map = compute_map(&rows, thresholds, policy)?;
    let mut out = Vec::new();
    write_map_csv(&map, &mut out)?;
    Ok(out)
}

/// DET points from `id,label,score` rows.
pub fn det_table(scores: &Path, polarity: Polarity) -> Result<Vec<u8>, PipelineError> {
    let rows = read_detection_scores(open(scores)?)?;
    let (bona_fide, attack) = split_detection(&rows);
    let curve = det_curve_with(&bona_fide, &attack, polarity)?;
    let mut out = Vec::new();
    write_det_csv(&curve, &mut out)?;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct KlOptions {
    /// Subset compared against all others; the first one in the file if unset.
    pub reference: Option<String>,
    /// Compute KL(subset || reference) instead of KL(reference || subset).
    pub reverse: bool,
    pub bins: usize,
    pub epsilon: f64,
}

/// KL divergence between a reference subset and each other subset of
/// `id,subset,score` rows.
pub fn kld_table(scores: &Path, opts: &KlOptions) -> Result<Vec<u8>, PipelineError> {
    let samples = read_quality_scores(open(scores)?)?;
    let names = subsets(&samples);
    let reference = match &opts.reference {
        Some(r) if names.contains(r) => r.clone(),
        Some(r) => {
            return Err(EvalError::Invalid(format!("reference subset {r:?} not in {}", scores.display())).into())
        }
        None => names.first().cloned().ok_or(EvalError::Empty("quality scores"))?,
    };
    let p = subset_values(&samples, &reference);
    let mut rows = Vec::new();
    for name in names.iter().filter(|n| **n != reference) {
        let q = subset_values(&samples, name);
        let kl = if opts.reverse {
            kl_divergence(&q, &p, opts.bins, opts.epsilon)?
        } else {
            kl_divergence(&p, &q, opts.bins, opts.epsilon)?
        };
        rows.push(KlRow {
            reference: reference.clone(),
            subset: name.clone(),
            kl,
        });
    }
    let mut out = Vec::new();
    write_kld_csv(&rows, &mut out)?;
    Ok(out)
}

/// Gaussian KDE curve per subset; Silverman bandwidth unless given.
pub fn kde_tables(scores: &Path, grid: usize, bandwidth: Option<f64>) -> Result<Vec<u8>, PipelineError> {
    let samples = read_quality_scores(open(scores)?)?;
    let mut tables = Vec::new();
    for name in subsets(&samples) {
        let values = subset_values(&samples, &name);
        let h = bandwidth.unwrap_or_else(|| silverman_bandwidth(&values));
        tables.push((name, kde_table(&values, h, grid)?));
    }
    let mut out = Vec::new();
    write_kde_csv(&tables, &mut out)?;
    Ok(out)
}
