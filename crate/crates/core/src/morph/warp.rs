//! Piecewise-affine warping over a triangulation with bilinear sampling.

use super::{MorphError, Triangulation};
use crate::raster::{quantize, Raster};
use crate::types::Point;

/// Doubled area below which a destination triangle counts as collapsed.
const MIN_DOUBLED_AREA: f64 = 1e-9;

/// Bilinear sample with clamp-to-edge addressing.
#[inline]
pub(crate) fn bilinear(src: &Raster, x: f64, y: f64, c: u8) -> f64 {
    let max_x = (src.width() - 1) as f64;
    let max_y = (src.height() - 1) as f64;
    let x = x.clamp(0.0, max_x);
    let y = y.clamp(0.0, max_y);
    let x0 = x.floor();
    let y0 = y.floor();
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as u32, y0 as u32);
    let x1 = (x0 + 1).min(src.width() - 1);
    let y1 = (y0 + 1).min(src.height() - 1);
    let top = src.get(x0, y0, c) as f64 * (1.0 - fx) + src.get(x1, y0, c) as f64 * fx;
    let bottom = src.get(x0, y1, c) as f64 * (1.0 - fx) + src.get(x1, y1, c) as f64 * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Warps `src` so that `src_pts[i]` lands on `dst_pts[i]`, returning real
/// samples. Pixels outside every destination triangle keep their source
/// value.
pub(crate) fn warp_samples(
    src: &Raster,
    src_pts: &[Point],
    dst_pts: &[Point],
    tri: &Triangulation,
) -> Result<Vec<f64>, MorphError> {
    if src_pts.len() != dst_pts.len() || dst_pts.len() != tri.vertices.len() {
        return Err(MorphError::VertexCount {
            src: src_pts.len(),
            dst: dst_pts.len(),
            triangulation: tri.vertices.len(),
        });
    }
    if src.is_empty() {
        return Err(MorphError::EmptyRaster);
    }
    let (w, h, ch) = (src.width() as usize, src.height() as usize, src.channels());
    let mut out: Vec<f64> = src.data().iter().map(|&v| v as f64).collect();
    let mut covered = vec![false; w * h];

    for (index, t) in tri.triangles.iter().enumerate() {
        let [d0, d1, d2] = t.map(|i| dst_pts[i]);
        let [s0, s1, s2] = t.map(|i| src_pts[i]);
        let area = (d1.x - d0.x) * (d2.y - d0.y) - (d1.y - d0.y) * (d2.x - d0.x);
        if area.abs() <= MIN_DOUBLED_AREA || !area.is_finite() {
            return Err(MorphError::DegenerateTriangle { index, vertices: *t });
        }
        let x_lo = d0.x.min(d1.x).min(d2.x).floor().max(0.0) as usize;
        let y_lo = d0.y.min(d1.y).min(d2.y).floor().max(0.0) as usize;
        let x_hi = (d0.x.max(d1.x).max(d2.x).ceil().max(0.0) as usize).min(w - 1);
        let y_hi = (d0.y.max(d1.y).max(d2.y).ceil().max(0.0) as usize).min(h - 1);
        let eps = 1e-9;
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                if covered[y * w + x] {
                    continue;
                }
                let (px, py) = (x as f64, y as f64);
                let l1 = ((px - d0.x) * (d2.y - d0.y) - (py - d0.y) * (d2.x - d0.x)) / area;
                let l2 = ((d1.x - d0.x) * (py - d0.y) - (d1.y - d0.y) * (px - d0.x)) / area;
                let l0 = 1.0 - l1 - l2;
                if l0 < -eps || l1 < -eps || l2 < -eps {
                    continue;
                }
                let sx = l0 * s0.x + l1 * s1.x + l2 * s2.x;
                let sy = l0 * s0.y + l1 * s1.y + l2 * s2.y;
                covered[y * w + x] = true;
                for c in 0..ch {
                    out[(y * w + x) * ch as usize + c as usize] = bilinear(src, sx, sy, c);
                }
            }
        }
    }
    Ok(out)
}

/// Piecewise-affine warp of `src` from `src_pts` to `dst_pts` over the
/// triangles of `tri`, rounded back to 8 bits.
pub fn piecewise_warp(
    src: &Raster,
    src_pts: &[Point],
    dst_pts: &[Point],
    tri: &Triangulation,
) -> Result<Raster, MorphError> {
    let samples = warp_samples(src, src_pts, dst_pts, tri)?;
    Ok(Raster::new(
        src.width(),
        src.height(),
        src.channels(),
        samples.into_iter().map(quantize).collect(),
    )?)
}
