//! Landmark-based morphing and de-morphing.
//!
//! Both faces are warped onto a shared geometry (the landmark average plus
//! eight border anchors) triangulated once, then cross-dissolved. De-morphing
//! runs the same machinery backwards against a trusted probe.

mod delaunay;
mod warp;

pub use delaunay::{delaunay, Triangulation, INCIRCLE_TOLERANCE};
pub use warp::piecewise_warp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gates::{cosine_distance, GateError};
use crate::raster::{quantize, Raster, RasterError};
use crate::types::{Embedding, LandmarkSet, Point};

#[derive(Debug, Error)]
pub enum MorphError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("points are all collinear")]
    Collinear,
    #[error("non-finite point coordinate")]
    NonFinite,
    #[error("destination triangle {index} {vertices:?} is degenerate")]
    DegenerateTriangle { index: usize, vertices: [usize; 3] },
    #[error("point counts differ: {src} source, {dst} destination, {triangulation} triangulated")]
    VertexCount {
        src: usize,
        dst: usize,
        triangulation: usize,
    },
    #[error("empty raster")]
    EmptyRaster,
    #[error("blend factor {0} outside [0, 1]")]
    BadAlpha(f64),
    #[error("de-morph factor {0} outside [0, 1)")]
    BadFactor(f64),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Distance(#[from] GateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MorphAlgorithm {
    /// Landmark-based morph produced by this crate.
    Lma,
    /// Morph produced by an outside tool and imported as a file.
    External,
}

/// One generated morph and the two subjects contributing to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphRecord {
    pub subject_a: String,
    pub subject_b: String,
    pub algorithm: MorphAlgorithm,
    pub alpha: f64,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmarks: Option<String>,
}

/// Corners and edge midpoints of a `width x height` image.
pub fn border_anchors(width: u32, height: u32) -> [Point; 8] {
    let (mx, my) = ((width - 1) as f64, (height - 1) as f64);
    [
        Point::new(0.0, 0.0),
        Point::new(mx / 2.0, 0.0),
        Point::new(mx, 0.0),
        Point::new(mx, my / 2.0),
        Point::new(mx, my),
        Point::new(mx / 2.0, my),
        Point::new(0.0, my),
        Point::new(0.0, my / 2.0),
    ]
}

fn with_anchors(l: &LandmarkSet, width: u32, height: u32) -> Vec<Point> {
    let mut pts = l.clamped(width, height).points().to_vec();
    pts.extend(border_anchors(width, height));
    pts
}

/// Morph geometry: `(1 - alpha) * la + alpha * lb` on the clamped sets.
pub fn morph_geometry(la: &LandmarkSet, lb: &LandmarkSet, alpha: f64, width: u32, height: u32) -> LandmarkSet {
    la.clamped(width, height).lerp(&lb.clamped(width, height), alpha)
}

/// Landmark morph of `a` and `b` with blend factor `alpha` (weight of `b`).
pub fn morph_pair(
    a: &Raster,
    la: &LandmarkSet,
    b: &Raster,
    lb: &LandmarkSet,
    alpha: f64,
) -> Result<Raster, MorphError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(MorphError::BadAlpha(alpha));
    }
    a.check_same_shape(b)?;
    if a.is_empty() {
        return Err(MorphError::EmptyRaster);
    }
    let (w, h) = (a.width(), a.height());
    let pa = with_anchors(la, w, h);
    let pb = with_anchors(lb, w, h);
    let target: Vec<Point> = pa.iter().zip(&pb).map(|(p, q)| p.lerp(q, alpha)).collect();
    let tri = delaunay(&target)?;
    let wa = warp::warp_samples(a, &pa, &target, &tri)?;
    let wb = warp::warp_samples(b, &pb, &target, &tri)?;
    let data = wa
        .iter()
        .zip(&wb)
        .map(|(x, y)| quantize((1.0 - alpha) * x + alpha * y))
        .collect();
    Ok(Raster::new(w, h, a.channels(), data)?)
}

/// Convex hull (counter-clockwise in `(x, y)`), collinear points dropped.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap().then(a.y.partial_cmp(&b.y).unwrap()));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Point, a: Point, b: Point| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        / 2.0
}

/// Distance from `p` to the boundary of a counter-clockwise convex polygon,
/// positive inside.
fn signed_distance(poly: &[Point], p: Point) -> f64 {
    let n = poly.len();
    let mut inside = true;
    let mut nearest = f64::INFINITY;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let (ex, ey) = (b.x - a.x, b.y - a.y);
        if ex * (p.y - a.y) - ey * (p.x - a.x) < 0.0 {
            inside = false;
        }
        let len2 = ex * ex + ey * ey;
        let t = (((p.x - a.x) * ex + (p.y - a.y) * ey) / len2).clamp(0.0, 1.0);
        nearest = nearest.min(p.distance(&Point::new(a.x + t * ex, a.y + t * ey)));
    }
    if inside {
        nearest
    } else {
        -nearest
    }
}

/// Pastes the face region of `morph` (convex hull of `landmarks`) onto
/// `background`, ramping the weight linearly over `feather_px` pixels
/// inward from the hull boundary.
pub fn splice_postprocess(
    morph: &Raster,
    background: &Raster,
    landmarks: &LandmarkSet,
    feather_px: u32,
) -> Result<Raster, MorphError> {
    morph.check_same_shape(background)?;
    let hull = convex_hull(landmarks.points());
    if polygon_area(&hull) <= 0.0 {
        return Ok(background.clone());
    }
    let (w, h, ch) = (morph.width(), morph.height(), morph.channels());
    let mut out = background.clone();
    let min_x = hull.iter().map(|p| p.x).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
    let min_y = hull.iter().map(|p| p.y).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
    let max_x = (hull
        .iter()
        .map(|p| p.x)
        .fold(f64::NEG_INFINITY, f64::max)
        .ceil()
        .max(0.0) as u32)
        .min(w - 1);
    let max_y = (hull
        .iter()
        .map(|p| p.y)
        .fold(f64::NEG_INFINITY, f64::max)
        .ceil()
        .max(0.0) as u32)
        .min(h - 1);
    for y in min_y..=max_y {
        for x in min_x..=max_x {
            let sd = signed_distance(&hull, Point::new(x as f64, y as f64));
            let weight = if sd < 0.0 {
                0.0
            } else if feather_px == 0 {
                1.0
            } else {
                (sd / feather_px as f64).min(1.0)
            };
            if weight == 0.0 {
                continue;
            }
            for c in 0..ch {
                let m = morph.get(x, y, c) as f64;
                let b = background.get(x, y, c) as f64;
                out.set(x, y, c, quantize(weight * m + (1.0 - weight) * b));
            }
        }
    }
    Ok(out)
}

/// Landmarks pushed away from the probe: `(ls - factor * lp) / (1 - factor)`.
pub fn demorph_geometry(ls: &LandmarkSet, lp: &LandmarkSet, factor: f64) -> Result<LandmarkSet, MorphError> {
    if !(0.0..1.0).contains(&factor) {
        return Err(MorphError::BadFactor(factor));
    }
    let pts = ls
        .points()
        .iter()
        .zip(lp.points())
        .map(|(s, p)| {
            Point::new(
                (s.x - factor * p.x) / (1.0 - factor),
                (s.y - factor * p.y) / (1.0 - factor),
            )
        })
        .collect();
    Ok(LandmarkSet::new(pts).expect("68 in, 68 out"))
}

/// Inverts a landmark morph using a trusted probe of one contributor,
/// approximating the other contributor's face.
pub fn demorph(
    suspect: &Raster,
    ls: &LandmarkSet,
    probe: &Raster,
    lp: &LandmarkSet,
    factor: f64,
) -> Result<Raster, MorphError> {
    let geometry = demorph_geometry(ls, lp, factor)?;
    suspect.check_same_shape(probe)?;
    if factor == 0.0 {
        return Ok(suspect.clone());
    }
    if suspect.is_empty() {
        return Err(MorphError::EmptyRaster);
    }
    let (w, h) = (suspect.width(), suspect.height());
    let ps = with_anchors(ls, w, h);
    let pp = with_anchors(lp, w, h);
    let target = with_anchors(&geometry, w, h);
    let tri = delaunay(&target)?;
    let ms = warp::warp_samples(suspect, &ps, &target, &tri)?;
    let mp = warp::warp_samples(probe, &pp, &target, &tri)?;
    let data = ms
        .iter()
        .zip(&mp)
        .map(|(m, p)| quantize((m - factor * p) / (1.0 - factor)))
        .collect();
    Ok(Raster::new(w, h, suspect.channels(), data)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LmfdDecision {
    BonaFide,
    MorphAttack,
}

/// Verification of the de-morphed face against the probe: a genuine
/// document reproduces the probe's identity.
pub fn lmfd_verify(
    demorphed: &Embedding,
    probe: &Embedding,
    threshold: f64,
) -> Result<(LmfdDecision, f64), MorphError> {
    if !(threshold > 0.0 && threshold < 2.0) {
        return Err(GateError::BadParameter(format!("verification threshold {threshold} outside (0, 2)")).into());
    }
    let d = cosine_distance(demorphed, probe)?;
    Ok((
        if d <= threshold {
            LmfdDecision::BonaFide
        } else {
            LmfdDecision::MorphAttack
        },
        d,
    ))
}
