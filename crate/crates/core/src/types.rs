//! Shared face-sample value types: embeddings, landmarks and pose.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Number of points in the standard 68-point face annotation.
pub const LANDMARK_COUNT: usize = 68;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// `(1 - t) * self + t * other`, evaluated per coordinate.
    pub fn lerp(&self, other: &Point, t: f64) -> Point {
        Point::new((1.0 - t) * self.x + t * other.x, (1.0 - t) * self.y + t * other.y)
    }
}

/// A face embedding produced by a recognition network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    values: Vec<f64>,
    normalized: bool,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            normalized: false,
        }
    }

    /// Scales `values` to unit length. A zero vector is kept as-is and left
    /// unflagged; callers comparing it get a zero-vector error.
    pub fn normalized(values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            Self {
                values: values.into_iter().map(|v| v / norm).collect(),
                normalized: true,
            }
        } else {
            Self::new(values)
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }
}

/// Head pose in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl PoseEstimate {
    pub fn frontal() -> Self {
        Self {
            yaw: 0.0,
            pitch: 0.0,
            roll: 0.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.yaw, self.pitch, self.roll]
            .iter()
            .all(|a| a.is_finite() && (-180.0..=180.0).contains(a))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("expected {LANDMARK_COUNT} landmarks, got {0}")]
pub struct LandmarkCountError(pub usize);

/// 68 ordered landmark points in pixel coordinates.
///
/// Indices are 0-based here; the usual 1-based annotation numbers are
/// `index + 1` (eyes are 37..=48, nose bridge 28..=31).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct LandmarkSet {
    points: Vec<Point>,
}

impl LandmarkSet {
    pub fn new(points: Vec<Point>) -> Result<Self, LandmarkCountError> {
        if points.len() != LANDMARK_COUNT {
            return Err(LandmarkCountError(points.len()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Point by its 1-based annotation number.
    pub fn annotated(&self, number: usize) -> Point {
        self.points[number - 1]
    }

    /// Clamps every point into `[0, width-1] x [0, height-1]`.
    pub fn clamped(&self, width: u32, height: u32) -> Self {
        let max_x = width.saturating_sub(1) as f64;
        let max_y = height.saturating_sub(1) as f64;
        Self {
            points: self
                .points
                .iter()
                .map(|p| Point::new(p.x.clamp(0.0, max_x), p.y.clamp(0.0, max_y)))
                .collect(),
        }
    }

    pub fn map(&self, f: impl Fn(&Point) -> Point) -> Self {
        Self {
            points: self.points.iter().map(f).collect(),
        }
    }

    /// Pointwise `(1 - t) * self + t * other`.
    pub fn lerp(&self, other: &LandmarkSet, t: f64) -> Self {
        Self {
            points: self
                .points
                .iter()
                .zip(&other.points)
                .map(|(a, b)| a.lerp(b, t))
                .collect(),
        }
    }

    fn mean_of(&self, numbers: std::ops::RangeInclusive<usize>) -> Point {
        let n = numbers.clone().count() as f64;
        let (sx, sy) = numbers
            .map(|i| self.annotated(i))
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Point::new(sx / n, sy / n)
    }

    /// Centre of the subject's right eye (points 37-42, image left).
    pub fn right_eye_center(&self) -> Point {
        self.mean_of(37..=42)
    }

    /// Centre of the subject's left eye (points 43-48, image right).
    pub fn left_eye_center(&self) -> Point {
        self.mean_of(43..=48)
    }

    pub fn inter_ocular_distance(&self) -> f64 {
        self.right_eye_center().distance(&self.left_eye_center())
    }
}

impl TryFrom<Vec<[f64; 2]>> for LandmarkSet {
    type Error = LandmarkCountError;

    fn try_from(raw: Vec<[f64; 2]>) -> Result<Self, Self::Error> {
        Self::new(raw.into_iter().map(|[x, y]| Point::new(x, y)).collect())
    }
}

impl From<LandmarkSet> for Vec<[f64; 2]> {
    fn from(set: LandmarkSet) -> Self {
        set.points.into_iter().map(|p| [p.x, p.y]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    F,
    M,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::F, Gender::M];
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::F => "F",
            Gender::M => "M",
        })
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "F" | "f" => Ok(Gender::F),
            "M" | "m" => Ok(Gender::M),
            other => Err(format!("unknown gender label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}
