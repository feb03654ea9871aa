//! Quality and identity gates for candidate base samples and mated samples.

mod canny;

pub use canny::{canny_edges, canny_luma, CannyParams, EdgeMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::Raster;
use crate::types::{Embedding, LandmarkSet, Point, PoseEstimate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GateError {
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cannot compare a zero embedding")]
    ZeroVector,
    #[error("degenerate landmarks: {0}")]
    DegenerateLandmarks(&'static str),
    #[error("empty image")]
    EmptyImage,
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("nose-bridge region [{x0}, {x1}] x [{y0}, {y1}] leaves the {width}x{height} image")]
    RegionOutside {
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
        width: u32,
        height: u32,
    },
}

/// Default identity thresholds (cosine distance).
pub const DIVERSITY_THRESHOLD: f64 = 0.45;
pub const PRESERVATION_THRESHOLD: f64 = 0.45;
/// Yaw and pitch must both lie in `[-POSE_LIMIT_DEG, POSE_LIMIT_DEG]`.
pub const POSE_LIMIT_DEG: f64 = 5.0;
/// Either eye below this aspect ratio counts as closed.
pub const EAR_CLOSED_BELOW: f64 = 0.2;
/// Edge density above which the nose bridge is flagged as covered.
pub const GLASSES_DENSITY: f64 = 0.12;
/// Bridge box padding as a fraction of the inter-ocular distance.
pub const BRIDGE_PADDING: f64 = 0.2;

/// `1 - cos(a, b)`, in `[0, 2]`.
pub fn cosine_distance(a: &Embedding, b: &Embedding) -> Result<f64, GateError> {
    if a.dim() != b.dim() {
        return Err(GateError::DimensionMismatch(a.dim(), b.dim()));
    }
    let dot = |u: &[f64], v: &[f64]| -> f64 { u.iter().zip(v).map(|(x, y)| x * y).sum() };
    let (na2, nb2) = (dot(a.values(), a.values()), dot(b.values(), b.values()));
    if na2 == 0.0 || nb2 == 0.0 {
        return Err(GateError::ZeroVector);
    }
    // sqrt(x * x) == x exactly, so identical inputs give exactly zero.
    Ok((1.0 - dot(a.values(), b.values()) / (na2 * nb2).sqrt()).clamp(0.0, 2.0))
}

pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64, GateError> {
    Ok(1.0 - cosine_distance(a, b)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Diversity {
    Accept,
    Reject { nearest: usize, distance: f64 },
}

impl Diversity {
    pub fn accepted(&self) -> bool {
        matches!(self, Diversity::Accept)
    }
}

/// Rejects a candidate that lies closer than `threshold` to any accepted
/// identity, reporting the nearest gallery entry.
pub fn diversity_check(candidate: &Embedding, gallery: &[Embedding], threshold: f64) -> Result<Diversity, GateError> {
    if !(threshold > 0.0 && threshold <= 2.0) {
        return Err(GateError::BadParameter(format!(
            "diversity threshold {threshold} outside (0, 2]"
        )));
    }
    let mut nearest: Option<(usize, f64)> = None;
    for (i, g) in gallery.iter().enumerate() {
        let d = cosine_distance(candidate, g)?;
        if nearest.is_none_or(|(_, best)| d < best) {
            nearest = Some((i, d));
        }
    }
    Ok(match nearest {
        Some((nearest, distance)) if distance < threshold => Diversity::Reject { nearest, distance },
        _ => Diversity::Accept,
    })
}

/// Accepts iff the mated sample stays within `threshold` of its base.
pub fn preservation_check(base: &Embedding, mated: &Embedding, threshold: f64) -> Result<bool, GateError> {
    if !(threshold > 0.0 && threshold < 2.0) {
        return Err(GateError::BadParameter(format!(
            "preservation threshold {threshold} outside (0, 2)"
        )));
    }
    Ok(cosine_distance(base, mated)? <= threshold)
}

/// Frontal-pose box on yaw and pitch (inclusive); roll is ignored.
pub fn pose_gate(p: &PoseEstimate) -> bool {
    pose_gate_with(p, POSE_LIMIT_DEG)
}

pub fn pose_gate_with(p: &PoseEstimate, limit: f64) -> bool {
    (-limit..=limit).contains(&p.yaw) && (-limit..=limit).contains(&p.pitch)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Eye {
    /// Subject's left eye, points 43-48.
    Left,
    /// Subject's right eye, points 37-42.
    Right,
}

/// `(|p2-p6| + |p3-p5|) / (2 |p1-p4|)` over the six contour points of one eye.
pub fn eye_aspect_ratio(l: &LandmarkSet, eye: Eye) -> Result<f64, GateError> {
    let first = match eye {
        Eye::Right => 37,
        Eye::Left => 43,
    };
    let p: Vec<Point> = (first..first + 6).map(|n| l.annotated(n)).collect();
    let width = p[0].distance(&p[3]);
    if width == 0.0 {
        return Err(GateError::DegenerateLandmarks("zero eye width"));
    }
    Ok((p[1].distance(&p[5]) + p[2].distance(&p[4])) / (2.0 * width))
}

/// `(left, right)` eye aspect ratios.
pub fn eye_aspect_ratios(l: &LandmarkSet) -> Result<(f64, f64), GateError> {
    Ok((eye_aspect_ratio(l, Eye::Left)?, eye_aspect_ratio(l, Eye::Right)?))
}

/// Closed-eye rule: both eyes must reach `min_ear`.
pub fn eyes_open(l: &LandmarkSet, min_ear: f64) -> Result<bool, GateError> {
    let (left, right) = eye_aspect_ratios(l)?;
    Ok(left >= min_ear && right >= min_ear)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum GlassesVerdict {
    Pass { density: f64 },
    Flagged { density: f64 },
}

impl GlassesVerdict {
    pub fn density(&self) -> f64 {
        match self {
            GlassesVerdict::Pass { density } | GlassesVerdict::Flagged { density } => *density,
        }
    }

    pub fn flagged(&self) -> bool {
        matches!(self, GlassesVerdict::Flagged { .. })
    }
}

/// Inclusive pixel box `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelBox {
    pub fn area(&self) -> usize {
        (self.x1 - self.x0 + 1) * (self.y1 - self.y0 + 1)
    }
}

/// Bounding box of points 28-31 padded by a fraction of the inter-ocular
/// distance; errors if it does not fit inside the image.
pub fn bridge_region(image: &Raster, l: &LandmarkSet) -> Result<PixelBox, GateError> {
    let pad = BRIDGE_PADDING * l.inter_ocular_distance();
    let bridge: Vec<Point> = (28..=31).map(|n| l.annotated(n)).collect();
    let min_x = bridge.iter().map(|p| p.x).fold(f64::INFINITY, f64::min) - pad;
    let max_x = bridge.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max) + pad;
    let min_y = bridge.iter().map(|p| p.y).fold(f64::INFINITY, f64::min) - pad;
    let max_y = bridge.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max) + pad;
    let outside = GateError::RegionOutside {
        x0: min_x,
        x1: max_x,
        y0: min_y,
        y1: max_y,
        width: image.width(),
        height: image.height(),
    };
    if !(min_x >= 0.0 && min_y >= 0.0 && max_x <= image.width() as f64 - 1.0 && max_y <= image.height() as f64 - 1.0) {
        return Err(outside);
    }
    Ok(PixelBox {
        x0: min_x.ceil() as usize,
        y0: min_y.ceil() as usize,
        x1: max_x.floor() as usize,
        y1: max_y.floor() as usize,
    })
}

/// Edge density on the nose bridge; frames of glasses crossing the bridge
/// raise it above `density_threshold`.
pub fn glasses_check(
    image: &Raster,
    l: &LandmarkSet,
    density_threshold: f64,
    params: CannyParams,
) -> Result<GlassesVerdict, GateError> {
    if image.is_empty() {
        return Err(GateError::EmptyImage);
    }
    let roi = bridge_region(image, l)?;
    // Run the detector on the region plus enough margin that the counted
    // pixels see the same neighbourhood as on the full image.
    let margin = params.support();
    let cx0 = roi.x0.saturating_sub(margin);
    let cy0 = roi.y0.saturating_sub(margin);
    let cx1 = (roi.x1 + margin).min(image.width() as usize - 1);
    let cy1 = (roi.y1 + margin).min(image.height() as usize - 1);
    let (cw, ch) = (cx1 - cx0 + 1, cy1 - cy0 + 1);
    let luma = image.to_luma_f64();
    let full_w = image.width() as usize;
    let crop: Vec<f64> = (cy0..=cy1)
        .flat_map(|y| luma[y * full_w + cx0..=y * full_w + cx1].iter().copied())
        .collect();
    let edges = canny_luma(&crop, cw, ch, params)?;
    let mut count = 0usize;
    for y in roi.y0..=roi.y1 {
        for x in roi.x0..=roi.x1 {
            count += edges.get(x - cx0, y - cy0) as usize;
        }
    }
    let density = count as f64 / roi.area() as f64;
    Ok(if density > density_threshold {
        GlassesVerdict::Flagged { density }
    } else {
        GlassesVerdict::Pass { density }
    })
}
