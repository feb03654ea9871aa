//! Canny edge detection on `[0, 1]` luma buffers.

use std::collections::VecDeque;

use super::GateError;
use crate::raster::Raster;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CannyParams {
    pub sigma: f64,
    pub low: f64,
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            sigma: 1.4,
            low: 0.1,
            high: 0.2,
        }
    }
}

impl CannyParams {
    fn validate(&self) -> Result<(), GateError> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(GateError::BadParameter(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if self.low.partial_cmp(&self.high) != Some(std::cmp::Ordering::Less) {
            return Err(GateError::BadParameter(format!(
                "low threshold {} must be below high threshold {}",
                self.low, self.high
            )));
        }
        Ok(())
    }

    /// Border width beyond which results do not depend on edge clamping.
    pub fn support(&self) -> usize {
        (3.0 * self.sigma).ceil() as usize + 1
    }
}

/// Binary edge map, `1` on edge pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl EdgeMap {
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }
}

/// Gaussian blur, Sobel gradient, non-maximum suppression and hysteresis.
///
/// Gradient magnitudes are raw Sobel responses on `[0, 1]` intensities;
/// borders use clamp-to-edge addressing.
pub fn canny_edges(image: &Raster, params: CannyParams) -> Result<EdgeMap, GateError> {
    if image.is_empty() {
        return Err(GateError::EmptyImage);
    }
    canny_luma(
        &image.to_luma_f64(),
        image.width() as usize,
        image.height() as usize,
        params,
    )
}

pub fn canny_luma(luma: &[f64], width: usize, height: usize, params: CannyParams) -> Result<EdgeMap, GateError> {
    params.validate()?;
    if width == 0 || height == 0 || luma.len() != width * height {
        return Err(GateError::EmptyImage);
    }
    let blurred = gaussian_blur(luma, width, height, params.sigma);

    let at = |x: isize, y: isize| -> f64 {
        let xc = x.clamp(0, width as isize - 1) as usize;
        let yc = y.clamp(0, height as isize - 1) as usize;
        blurred[yc * width + xc]
    };
    let mut gx = vec![0.0; width * height];
    let mut gy = vec![0.0; width * height];
    let mut mag = vec![0.0; width * height];
    for y in 0..height as isize {
        for x in 0..width as isize {
            let dx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let dy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * width + x as usize;
            gx[i] = dx;
            gy[i] = dy;
            mag[i] = dx.hypot(dy);
        }
    }

    // Non-maximum suppression along the gradient, quantised to 4 directions.
    let mag_at = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= width as isize || y >= height as isize {
            0.0
        } else {
            mag[y as usize * width + x as usize]
        }
    };
    let mut thin = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let m = mag[i];
            if m < params.low {
                continue;
            }
            let angle = gy[i].atan2(gx[i]).to_degrees();
            let angle = if angle < 0.0 { angle + 180.0 } else { angle };
            let (ox, oy): (isize, isize) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let (xi, yi) = (x as isize, y as isize);
            if m >= mag_at(xi + ox, yi + oy) && m >= mag_at(xi - ox, yi - oy) {
                thin[i] = m;
            }
        }
    }

    // Hysteresis: grow strong seeds through 8-connected weak pixels.
    let mut out = vec![0u8; width * height];
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= params.high {
            out[i] = 1;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % width) as isize, (i / width) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                    continue;
                }
                let j = ny as usize * width + nx as usize;
                if out[j] == 0 && thin[j] >= params.low {
                    out[j] = 1;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(EdgeMap {
        width,
        height,
        data: out,
    })
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

fn gaussian_blur(src: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; src.len()];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let sx = (x as isize + k as isize - radius).clamp(0, width as isize - 1) as usize;
                acc += w * row[sx];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let sy = (y as isize + k as isize - radius).clamp(0, height as isize - 1) as usize;
                acc += w * tmp[sy * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_image_has_no_edges() {
        let img = Raster::filled(32, 24, 1, 140);
        let edges = canny_edges(&img, CannyParams::default()).unwrap();
        assert_eq!(edges.count(), 0);
    }

    #[test]
    fn vertical_step_is_localised_and_covers_every_row() {
        let c = 20;
        let img = Raster::from_fn_gray(40, 30, |x, _| if x < c { 30 } else { 220 });
        let edges = canny_edges(&img, CannyParams::default()).unwrap();
        for y in 0..30 {
            let cols: Vec<usize> = (0..40).filter(|&x| edges.get(x, y) == 1).collect();
            assert!(!cols.is_empty(), "row {y} unmarked");
            assert!(
                cols.iter().all(|&x| x + 1 >= c as usize && x <= c as usize + 1),
                "row {y}: {cols:?}"
            );
        }
    }

    #[test]
    fn rejects_inverted_thresholds_and_empty_images() {
        let img = Raster::filled(4, 4, 1, 0);
        let bad = CannyParams {
            low: 0.3,
            high: 0.2,
            ..CannyParams::default()
        };
        assert!(matches!(canny_edges(&img, bad), Err(GateError::BadParameter(_))));
        let empty = Raster::filled(0, 4, 1, 0);
        assert!(matches!(
            canny_edges(&empty, CannyParams::default()),
            Err(GateError::EmptyImage)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn interior_shift_equivariance(seed in any::<u64>(), shift in 1usize..4) {
            // A blob image shifted right by `shift` pixels shifts its edges.
            let (w, h) = (48usize, 40usize);
            let mut state = seed | 1;
            let mut next = || { state ^= state << 13; state ^= state >> 7; state ^= state << 17; state };
            let cx = 18.0 + (next() % 6) as f64;
            let cy = 16.0 + (next() % 8) as f64;
            let r = 6.0 + (next() % 4) as f64;
            let render = |dx: f64| Raster::from_fn_gray(w as u32, h as u32, |x, y| {
                let d = ((x as f64 - cx - dx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                if d < r { 200 } else { 40 }
            });
            let p = CannyParams::default();
            let a = canny_edges(&render(0.0), p).unwrap();
            let b = canny_edges(&render(shift as f64), p).unwrap();
            let border = p.support();
            for y in border..h - border {
                for x in border..w - border - shift {
                    prop_assert_eq!(a.get(x, y), b.get(x + shift, y));
                }
            }
        }
    }
}
