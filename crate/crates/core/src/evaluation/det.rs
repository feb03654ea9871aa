//! Detection error trade-off between MACER and BPCER.

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// Scores at or above the threshold are classified bona fide.
    #[default]
    Higher,
    /// Scores at or below the threshold are classified bona fide.
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    pub threshold: f64,
    /// Attacks classified bona fide.
    pub macer: f64,
    /// Bona fide presentations classified as attacks.
    pub bpcer: f64,
}

/// Operating points ordered from most permissive (MACER 1, BPCER 0) to
/// most strict (MACER 0, BPCER 1).
#[derive(Debug, Clone, PartialEq)]
pub struct DetCurve {
    pub points: Vec<DetPoint>,
}

impl DetCurve {
    /// Point minimising `|MACER - BPCER|`, first wins on ties.
    pub fn closest_to_equal_error(&self) -> DetPoint {
        *self
            .points
            .iter()
            .min_by(|a, b| {
                (a.macer - a.bpcer)
                    .abs()
                    .partial_cmp(&(b.macer - b.bpcer).abs())
                    .unwrap()
            })
            .expect("curve has endpoints")
    }
}

pub fn det_curve(bona_fide: &[f64], attack: &[f64]) -> Result<DetCurve, EvalError> {
    det_curve_with(bona_fide, attack, Polarity::Higher)
}

pub fn det_curve_with(bona_fide: &[f64], attack: &[f64], polarity: Polarity) -> Result<DetCurve, EvalError> {
    if bona_fide.is_empty() {
        return Err(EvalError::Empty("bona fide scores"));
    }
    if attack.is_empty() {
        return Err(EvalError::Empty("attack scores"));
    }
    if bona_fide.iter().chain(attack).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite("detection score".into()));
    }
    // Work in "higher is bona fide" orientation.
    let sign = match polarity {
        Polarity::Higher => 1.0,
        Polarity::Lower => -1.0,
    };
    let mut bf: Vec<f64> = bona_fide.iter().map(|v| sign * v).collect();
    let mut at: Vec<f64> = attack.iter().map(|v| sign * v).collect();
    bf.sort_by(|a, b| a.partial_cmp(b).unwrap());
    at.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut thresholds: Vec<f64> = bf.iter().chain(&at).copied().collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();

    let (n_bf, n_at) = (bf.len() as f64, at.len() as f64);
    let mut points = Vec::with_capacity(thresholds.len() + 2);
    points.push(DetPoint {
        threshold: sign * f64::NEG_INFINITY,
        macer: 1.0,
        bpcer: 0.0,
    });
    for t in thresholds {
        let attacks_below = at.partition_point(|&v| v < t);
        let bona_fide_below = bf.partition_point(|&v| v < t);
        points.push(DetPoint {
            threshold: sign * t,
            macer: (at.len() - attacks_below) as f64 / n_at,
            bpcer: bona_fide_below as f64 / n_bf,
        });
    }
    points.push(DetPoint {
        threshold: sign * f64::INFINITY,
        macer: 0.0,
        bpcer: 1.0,
    });
    Ok(DetCurve { points })
}
