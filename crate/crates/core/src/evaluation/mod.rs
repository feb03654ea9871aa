//! Vulnerability and detection metrics with plot-ready CSV output.

mod density;
mod det;
pub mod io;
mod map;

pub use density::{kde_table, kl_divergence, silverman_bandwidth, trapezoid, KL_BINS, KL_EPSILON};
pub use det::{det_curve, det_curve_with, DetCurve, DetPoint, Polarity};
pub use io::ScoreSample;
pub use map::{compute_map, AttemptScore, ContributorPolicy, MapMatrix};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no {0}")]
    Empty(&'static str),
    #[error("no threshold configured for system {0:?}")]
    UnknownSystem(String),
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("{0}")]
    Invalid(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests;
