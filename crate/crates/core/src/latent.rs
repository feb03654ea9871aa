//! W-space latent editing: attribute-direction fitting, boundary projections,
//! neutralisation, linear semantic edits, PCA directions, and randomised PCA
//! edits whose strength is capped by an identity-distance budget.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gates::{cosine_distance, GateError};
use crate::types::Embedding;

type OracleError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum LatentError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("latent vector must be non-empty and finite")]
    InvalidVector,
    #[error("non-finite scale {0}")]
    NonFiniteScale(f64),
    #[error("degenerate labels: need at least 2 samples per class (got {pos} positive, {neg} negative)")]
    DegenerateLabels { pos: usize, neg: usize },
    #[error("{latents} latents but {labels} labels")]
    LabelCount { latents: usize, labels: usize },
    #[error("fitted hyperplane has a zero normal")]
    ZeroNormal,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("zero variance: all samples coincide")]
    ZeroVariance,
    #[error("requested {requested} components but the centred data has rank {rank}")]
    RankExceeded { requested: usize, rank: usize },
    #[error("edit recipe has no terms")]
    EmptyRecipe,
    #[error("no direction named {0:?}")]
    UnknownDirection(String),
    #[error("no PCA components supplied")]
    NoComponents,
    #[error("identity budget must lie in (0, 1), got {0}")]
    BadBudget(f64),
    #[error("ineffective directions: the largest edit leaves the embedding unchanged")]
    IneffectiveDirections,
    #[error("embedding oracle failed: {0}")]
    Oracle(#[source] OracleError),
    #[error(transparent)]
    Distance(#[from] GateError),
}

/// A point in the generator's intermediate (W) latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LatentVector {
    values: Vec<f64>,
}

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Result<Self, LatentError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(LatentError::InvalidVector);
        }
        Ok(Self { values })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim.max(1)],
        }
    }

    /// Unit vector along axis `axis`.
    pub fn basis(dim: usize, axis: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.values[axis] = 1.0;
        v
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.values.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    fn axpy(&self, scale: f64, direction: &[f64]) -> LatentVector {
        LatentVector {
            values: self.values.iter().zip(direction).map(|(w, n)| w + scale * n).collect(),
        }
    }

    fn check_dim(&self, dim: usize) -> Result<(), LatentError> {
        if self.dim() == dim {
            Ok(())
        } else {
            Err(LatentError::DimensionMismatch {
                expected: self.dim(),
                actual: dim,
            })
        }
    }
}

impl TryFrom<Vec<f64>> for LatentVector {
    type Error = LatentError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<LatentVector> for Vec<f64> {
    fn from(v: LatentVector) -> Self {
        v.values
    }
}

/// Unit normal of a binary-attribute hyperplane together with the mean
/// distance of each class from it.
///
/// `mean_distance_pos` and `mean_distance_neg` are both measured towards
/// their own side, so a cleanly separated class reports a positive value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemanticDirection {
    pub attribute: String,
    normal: Vec<f64>,
    pub mean_distance_neg: f64,
    pub mean_distance_pos: f64,
}

impl SemanticDirection {
    /// Normalises `normal` to unit length.
    pub fn new(attribute: impl Into<String>, normal: Vec<f64>) -> Result<Self, LatentError> {
        if normal.is_empty() || normal.iter().any(|v| !v.is_finite()) {
            return Err(LatentError::InvalidVector);
        }
        let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(LatentError::ZeroNormal);
        }
        Ok(Self {
            attribute: attribute.into(),
            normal: normal.into_iter().map(|v| v / norm).collect(),
            mean_distance_neg: 0.0,
            mean_distance_pos: 0.0,
        })
    }

    pub fn with_mean_distances(mut self, neg: f64, pos: f64) -> Self {
        self.mean_distance_neg = neg;
        self.mean_distance_pos = pos;
        self
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }
}

/// Directions addressed by attribute name.
#[derive(Debug, Clone, Default)]
pub struct DirectionSet {
    directions: BTreeMap<String, SemanticDirection>,
}

impl DirectionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, direction: SemanticDirection) {
        self.directions.insert(direction.attribute.clone(), direction);
    }

    pub fn get(&self, attribute: &str) -> Result<&SemanticDirection, LatentError> {
        self.directions
            .get(attribute)
            .ok_or_else(|| LatentError::UnknownDirection(attribute.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &SemanticDirection> {
        self.directions.values()
    }
}

impl FromIterator<SemanticDirection> for DirectionSet {
    fn from_iter<T: IntoIterator<Item = SemanticDirection>>(iter: T) -> Self {
        let mut set = Self::new();
        for d in iter {
            set.insert(d);
        }
        set
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditMode {
    Ifgs,
    Ifgd,
    Frpca,
}

impl EditMode {
    pub const ALL: [EditMode; 3] = [EditMode::Ifgs, EditMode::Ifgd, EditMode::Frpca];

    pub fn as_str(&self) -> &'static str {
        match self {
            EditMode::Ifgs => "ifgs",
            EditMode::Ifgd => "ifgd",
            EditMode::Frpca => "frpca",
        }
    }
}

impl fmt::Display for EditMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditTerm {
    pub attribute: String,
    pub scale: f64,
}

/// A linear edit: `w + sum(scale_i * n_i)` over named directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditRecipe {
    pub mode: EditMode,
    pub terms: Vec<EditTerm>,
}

impl EditRecipe {
    pub fn new(mode: EditMode, terms: impl IntoIterator<Item = (impl Into<String>, f64)>) -> Self {
        Self {
            mode,
            terms: terms
                .into_iter()
                .map(|(attribute, scale)| EditTerm {
                    attribute: attribute.into(),
                    scale,
                })
                .collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.terms.iter().all(|t| t.scale == 0.0)
    }
}

// ---------------------------------------------------------------------------
// Direction fitting
// ---------------------------------------------------------------------------

/// Hyper-parameters of the hinge-loss subgradient solver.
#[derive(Debug, Clone, Copy)]
pub struct HingeSolver {
    pub iterations: usize,
    pub step: f64,
    pub l2: f64,
}

impl Default for HingeSolver {
    fn default() -> Self {
        Self {
            iterations: 500,
            step: 0.1,
            l2: 1e-3,
        }
    }
}

/// Fits a linear max-margin separator to labelled latents and returns its unit
/// normal (pointing at the positive class) with per-class mean distances.
pub fn fit_direction(
    attribute: &str,
    latents: &[LatentVector],
    labels: &[bool],
) -> Result<SemanticDirection, LatentError> {
    fit_direction_with(attribute, latents, labels, HingeSolver::default())
}

pub fn fit_direction_with(
    attribute: &str,
    latents: &[LatentVector],
    labels: &[bool],
    solver: HingeSolver,
) -> Result<SemanticDirection, LatentError> {
    if latents.len() != labels.len() {
        return Err(LatentError::LabelCount {
            latents: latents.len(),
            labels: labels.len(),
        });
    }
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos < 2 || neg < 2 {
        return Err(LatentError::DegenerateLabels { pos, neg });
    }
    let dim = latents[0].dim();
    for w in latents {
        w.check_dim(dim)?;
    }

    // Full-batch subgradient descent on
    //   l2/2 |w|^2 + 1/n sum max(0, 1 - y (w.x + b)).
    let n = latents.len() as f64;
    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let mut grad = vec![0.0; dim];
    for _ in 0..solver.iterations {
        for (g, w) in grad.iter_mut().zip(&weights) {
            *g = solver.l2 * w;
        }
        let mut grad_b = 0.0;
        for (x, &label) in latents.iter().zip(labels) {
            let y = if label { 1.0 } else { -1.0 };
            let margin = y * (x.dot(&weights) + bias);
            if margin < 1.0 {
                for (g, xi) in grad.iter_mut().zip(x.values()) {
                    *g -= y * xi / n;
                }
                grad_b -= y / n;
            }
        }
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= solver.step * g;
        }
        bias -= solver.step * grad_b;
    }

    let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(LatentError::ZeroNormal);
    }
    let normal: Vec<f64> = weights.iter().map(|w| w / norm).collect();
    let offset = bias / norm;

    let (mut sum_pos, mut sum_neg) = (0.0, 0.0);
    for (x, &label) in latents.iter().zip(labels) {
        let signed = x.dot(&normal) + offset;
        if label {
            sum_pos += signed;
        } else {
            sum_neg -= signed;
        }
    }
    Ok(SemanticDirection {
        attribute: attribute.to_string(),
        normal,
        mean_distance_neg: sum_neg / neg as f64,
        mean_distance_pos: sum_pos / pos as f64,
    })
}

// ---------------------------------------------------------------------------
// Projections and linear edits
// ---------------------------------------------------------------------------

/// `w - (w.n) n`: removes the component of `w` along the direction.
pub fn project_to_boundary(w: &LatentVector, d: &SemanticDirection) -> Result<LatentVector, LatentError> {
    w.check_dim(d.dim())?;
    Ok(w.axpy(-w.dot(d.normal()), d.normal()))
}

/// `w + scale * n`.
pub fn shift_along(w: &LatentVector, d: &SemanticDirection, scale: f64) -> Result<LatentVector, LatentError> {
    w.check_dim(d.dim())?;
    if !scale.is_finite() {
        return Err(LatentError::NonFiniteScale(scale));
    }
    Ok(w.axpy(scale, d.normal()))
}

/// Frontalises pose, removes directional lighting and moves the expression
/// to the neutral class: project on the pose boundary, then the illumination
/// boundary, then project on the expression boundary and step `d_neutral`
/// towards its negative side.
pub fn neutralize(
    w: &LatentVector,
    pose: &SemanticDirection,
    illumination: &SemanticDirection,
    expression: &SemanticDirection,
    d_neutral: f64,
) -> Result<LatentVector, LatentError> {
    if !d_neutral.is_finite() {
        return Err(LatentError::NonFiniteScale(d_neutral));
    }
    let w1 = project_to_boundary(w, pose)?;
    let w2 = project_to_boundary(&w1, illumination)?;
    w2.check_dim(expression.dim())?;
    let shift = w2.dot(expression.normal()) + d_neutral;
    Ok(w2.axpy(-shift, expression.normal()))
}

/// Minor illumination and ageing edit: `w + a_i n_i + a_a n_a`.
pub fn edit_ifgs(
    w_base: &LatentVector,
    illumination: &SemanticDirection,
    age: &SemanticDirection,
    alpha_illumination: f64,
    alpha_age: f64,
) -> Result<LatentVector, LatentError> {
    let w = shift_along(w_base, illumination, alpha_illumination)?;
    shift_along(&w, age, alpha_age)
}

/// Applies every term of `recipe`: `w + sum(scale_i * n_i)`.
///
/// Terms are summed into one offset before it is added, so reordering the
/// terms cannot change the result beyond float reassociation of the offset.
pub fn edit_ifgd(
    w_base: &LatentVector,
    recipe: &EditRecipe,
    directions: &DirectionSet,
) -> Result<LatentVector, LatentError> {
    if recipe.terms.is_empty() {
        return Err(LatentError::EmptyRecipe);
    }
    let mut offset = vec![0.0; w_base.dim()];
    for term in &recipe.terms {
        let d = directions.get(&term.attribute)?;
        w_base.check_dim(d.dim())?;
        if !term.scale.is_finite() {
            return Err(LatentError::NonFiniteScale(term.scale));
        }
        for (o, n) in offset.iter_mut().zip(d.normal()) {
            *o += term.scale * n;
        }
    }
    Ok(w_base.axpy(1.0, &offset))
}

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PcaFit {
    pub mean: Vec<f64>,
    /// Unit principal axes, largest variance first.
    pub components: Vec<SemanticDirection>,
    /// Sample variance along each returned component.
    pub explained_variance: Vec<f64>,
    /// Number of eigenvalues above the rank tolerance.
    pub rank: usize,
}

/// Principal axes of `latents` from the eigendecomposition of the sample
/// covariance. Each axis has its first non-zero component made positive.
pub fn fit_pca(latents: &[LatentVector], k: usize) -> Result<PcaFit, LatentError> {
    if latents.len() < 2 {
        return Err(LatentError::TooFewSamples(latents.len()));
    }
    let dim = latents[0].dim();
    for w in latents {
        w.check_dim(dim)?;
    }
    let n = latents.len();
    let mut mean = vec![0.0; dim];
    for w in latents {
        for (m, v) in mean.iter_mut().zip(w.values()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centred = DMatrix::from_fn(n, dim, |i, j| latents[i].values[j] - mean[j]);
    let cov = (centred.transpose() * &centred) / (n as f64 - 1.0);

    let eigen = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let largest = eigen.eigenvalues[order[0]].max(0.0);
    if largest <= f64::MIN_POSITIVE {
        return Err(LatentError::ZeroVariance);
    }
    let tolerance = largest * (dim.max(n) as f64) * f64::EPSILON * 16.0;
    let rank = order.iter().filter(|&&i| eigen.eigenvalues[i] > tolerance).count();
    if k == 0 || k > rank {
        return Err(LatentError::RankExceeded { requested: k, rank });
    }

    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for (rank_index, &col) in order.iter().take(k).enumerate() {
        let mut axis: Vec<f64> = eigen.eigenvectors.column(col).iter().copied().collect();
        if let Some(first) = axis.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                axis.iter_mut().for_each(|v| *v = -*v);
            }
        }
        components.push(SemanticDirection::new(format!("pca{rank_index}"), axis)?);
        explained_variance.push(eigen.eigenvalues[col]);
    }
    Ok(PcaFit {
        mean,
        components,
        explained_variance,
        rank,
    })
}

// ---------------------------------------------------------------------------
// Randomised PCA editing under an identity budget
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct FrpcaSearch {
    pub max_scale: f64,
    pub iterations: usize,
}

impl Default for FrpcaSearch {
    fn default() -> Self {
        Self {
            max_scale: 10.0,
            iterations: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrpcaEdit {
    pub latent: LatentVector,
    pub coefficients: Vec<f64>,
    pub scale: f64,
    pub distance: f64,
}

/// Unit-norm standard-normal coefficients over `count` components.
pub fn frpca_coefficients(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..count).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        raw
    } else {
        raw.into_iter().map(|v| v / norm).collect()
    }
}

/// Random edit along a seeded combination of PCA axes, scaled as far as the
/// embedding distance to the base stays within `tau_id`.
pub fn edit_frpca<F>(
    w_base: &LatentVector,
    components: &[SemanticDirection],
    seed: u64,
    embed: F,
    tau_id: f64,
) -> Result<FrpcaEdit, LatentError>
where
    F: FnMut(&LatentVector) -> Result<Embedding, OracleError>,
{
    let coefficients = frpca_coefficients(components.len(), seed);
    edit_frpca_with_coefficients(w_base, components, &coefficients, embed, tau_id, FrpcaSearch::default())
}

/// As [`edit_frpca`] with explicit coefficients and search settings.
pub fn edit_frpca_with_coefficients<F>(
    w_base: &LatentVector,
    components: &[SemanticDirection],
    coefficients: &[f64],
    mut embed: F,
    tau_id: f64,
    search: FrpcaSearch,
) -> Result<FrpcaEdit, LatentError>
where
    F: FnMut(&LatentVector) -> Result<Embedding, OracleError>,
{
    if components.is_empty() {
        return Err(LatentError::NoComponents);
    }
    if !(tau_id > 0.0 && tau_id < 1.0) {
        return Err(LatentError::BadBudget(tau_id));
    }
    if coefficients.len() != components.len() {
        return Err(LatentError::DimensionMismatch {
            expected: components.len(),
            actual: coefficients.len(),
        });
    }
    let mut direction = vec![0.0; w_base.dim()];
    for (c, d) in coefficients.iter().zip(components) {
        w_base.check_dim(d.dim())?;
        for (v, n) in direction.iter_mut().zip(d.normal()) {
            *v += c * n;
        }
    }

    let base = embed(w_base).map_err(LatentError::Oracle)?;
    let mut measure = |scale: f64| -> Result<(LatentVector, f64), LatentError> {
        let w = w_base.axpy(scale, &direction);
        let e = embed(&w).map_err(LatentError::Oracle)?;
        let d = cosine_distance(&base, &e)?;
        Ok((w, d))
    };

    let (w_max, d_max) = measure(search.max_scale)?;
    if d_max <= 0.0 {
        return Err(LatentError::IneffectiveDirections);
    }
    if d_max <= tau_id {
        return Ok(FrpcaEdit {
            latent: w_max,
            coefficients: coefficients.to_vec(),
            scale: search.max_scale,
            distance: d_max,
        });
    }

    // Invariant: distance(lo) <= tau_id < distance(hi).
    let (mut lo, mut hi) = (0.0, search.max_scale);
    let mut best: Option<(LatentVector, f64)> = None;
    for _ in 0..search.iterations {
        let mid = 0.5 * (lo + hi);
        let (w, d) = measure(mid)?;
        if d <= tau_id {
            lo = mid;
            best = Some((w, d));
        } else {
            hi = mid;
        }
    }
    match best {
        Some((latent, distance)) if distance > 0.0 => Ok(FrpcaEdit {
            latent,
            coefficients: coefficients.to_vec(),
            scale: lo,
            distance,
        }),
        _ => Err(LatentError::IneffectiveDirections),
    }
}
