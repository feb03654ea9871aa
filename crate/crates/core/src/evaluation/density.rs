//! Quality-score distribution comparison: histogram KL divergence and
//! Gaussian kernel density curves.

use std::f64::consts::PI;

use super::EvalError;

/// Default number of histogram bins for KL divergence.
pub const KL_BINS: usize = 100;
/// Default per-bin smoothing mass.
pub const KL_EPSILON: f64 = 1e-10;

/// `KL(P || Q)` in nats between histograms of `p` and `q` over the shared
/// range of both sets, with `epsilon` added to every bin before
/// normalising.
pub fn kl_divergence(p: &[f64], q: &[f64], bins: usize, epsilon: f64) -> Result<f64, EvalError> {
    if p.is_empty() {
        return Err(EvalError::Empty("P samples"));
    }
    if q.is_empty() {
        return Err(EvalError::Empty("Q samples"));
    }
    if bins < 2 {
        return Err(EvalError::Invalid(format!("need at least 2 bins, got {bins}")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(EvalError::Invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if p.iter().chain(q).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite("quality score".into()));
    }
    let lo = p.iter().chain(q).copied().fold(f64::INFINITY, f64::min);
    let hi = p.iter().chain(q).copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(0.0);
    }
    let hp = histogram(p, lo, hi, bins, epsilon);
    let hq = histogram(q, lo, hi, bins, epsilon);
    let kl: f64 = hp.iter().zip(&hq).map(|(a, b)| a * (a / b).ln()).sum();
    Ok(kl.max(0.0))
}

fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize, epsilon: f64) -> Vec<f64> {
    let mut counts = vec![epsilon; bins];
    for &v in values {
        let idx = (((v - lo) / (hi - lo)) * bins as f64).floor() as usize;
        counts[idx.min(bins - 1)] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    counts.iter_mut().for_each(|c| *c /= total);
    counts
}

/// Gaussian KDE evaluated on `grid` evenly spaced points covering
/// `[min - 3h, max + 3h]`.
pub fn kde_table(samples: &[f64], bandwidth: f64, grid: usize) -> Result<Vec<(f64, f64)>, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::Empty("KDE samples"));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(EvalError::Invalid(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    if grid < 2 {
        return Err(EvalError::Invalid(format!(
            "KDE grid needs at least 2 points, got {grid}"
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite("KDE sample".into()));
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * bandwidth;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * bandwidth;
    let norm = 1.0 / (samples.len() as f64 * bandwidth * (2.0 * PI).sqrt());
    Ok((0..grid)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (grid - 1) as f64;
            let density = samples
                .iter()
                .map(|s| {
                    let u = (x - s) / bandwidth;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
                * norm;
            (x, density)
        })
        .collect())
}

/// Silverman's rule of thumb, `0.9 min(sd, IQR/1.34) n^(-1/5)`, falling back
/// to a unit-free `1e-3` for degenerate samples.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 1e-3;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantile = |q: f64| {
        let pos = q * (n - 1) as f64;
        let (i, f) = (pos.floor() as usize, pos.fract());
        sorted[i] + f * (sorted[(i + 1).min(n - 1)] - sorted[i])
    };
    let iqr = quantile(0.75) - quantile(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (n as f64).powf(-0.2);
    if h > 0.0 && h.is_finite() {
        h
    } else {
        1e-3
    }
}

/// Trapezoid-rule integral of a sampled curve.
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum()
}
