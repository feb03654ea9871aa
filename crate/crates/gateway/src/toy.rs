//! Deterministic offline provider.
//!
//! A latent is rendered as a 256x256 grayscale cartoon face whose geometry is
//! an affine function of the leading components. The latent travels with the
//! image in a checksummed tag on row 0, so embeddings, pose, landmarks and
//! gender are recovered exactly from the pixels.

use morphforge_core::latent::{DirectionSet, LatentVector, SemanticDirection};
use morphforge_core::types::LANDMARK_COUNT;
use morphforge_core::{Embedding, Gender, LandmarkSet, Point, PoseEstimate, Raster};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::{Capability, CapabilitySet, GatewayError, Provider};

pub const IMAGE_SIZE: u32 = 256;

/// Latent component roles.
pub mod axis {
    pub const CENTER_X: usize = 0;
    pub const CENTER_Y: usize = 1;
    pub const SCALE: usize = 2;
    pub const EYE_SPACING: usize = 3;
    pub const EYE_OPENNESS: usize = 4;
    pub const YAW: usize = 5;
    pub const PITCH: usize = 6;
    pub const EXPRESSION: usize = 7;
    pub const ILLUMINATION: usize = 8;
    pub const AGE: usize = 9;
    pub const GLASSES: usize = 10;
    pub const GENDER: usize = 11;
    /// Components the renderer reads.
    pub const USED: usize = 12;
}

/// Degrees of head rotation per unit of the yaw and pitch components.
pub const DEGREES_PER_UNIT: f64 = 3.0;
/// Glasses are drawn when the glasses component exceeds this.
pub const GLASSES_ABOVE: f64 = 1.2;
/// Eye aspect ratio of a neutral latent.
pub const NEUTRAL_EAR: f64 = 0.3;

const TAG_MAGIC: &[u8; 4] = b"SYNT";
const BACKGROUND: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyConfig {
    pub latent_dim: usize,
    pub embedding_dim: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            embedding_dim: 16,
        }
    }
}

impl ToyConfig {
    /// Longest latent that fits in the row-0 tag.
    pub const MAX_LATENT_DIM: usize = (IMAGE_SIZE as usize - 4 - 2 - 4) / 4;
}

#[derive(Debug, Clone)]
pub struct ToyProvider {
    config: ToyConfig,
    capabilities: CapabilitySet,
}

impl ToyProvider {
    pub fn new(config: ToyConfig) -> Result<Self, GatewayError> {
        if config.latent_dim < axis::USED || config.latent_dim > ToyConfig::MAX_LATENT_DIM {
            return Err(GatewayError::Config(format!(
                "toy latent_dim must lie in [{}, {}], got {}",
                axis::USED,
                ToyConfig::MAX_LATENT_DIM,
                config.latent_dim
            )));
        }
        if config.embedding_dim == 0 || config.embedding_dim > config.latent_dim {
            return Err(GatewayError::Config(format!(
                "toy embedding_dim must lie in [1, {}], got {}",
                config.latent_dim, config.embedding_dim
            )));
        }
        Ok(Self {
            config,
            capabilities: Capability::ALL.into_iter().collect(),
        })
    }

    pub fn config(&self) -> ToyConfig {
        self.config
    }

    /// Axis-aligned pose, illumination, expression and age directions.
    /// The expression direction's neutral-side mean distance is 0.5.
    pub fn directions(&self) -> DirectionSet {
        let d = self.config.latent_dim;
        let unit = |i: usize| {
            let mut v = vec![0.0; d];
            v[i] = 1.0;
            v
        };
        [
            ("pose", axis::YAW, 1.0),
            ("illumination", axis::ILLUMINATION, 1.0),
            ("expression", axis::EXPRESSION, 0.5),
            ("age", axis::AGE, 1.0),
        ]
        .into_iter()
        .map(|(name, i, dist)| {
            SemanticDirection::new(name, unit(i))
                .expect("unit axis")
                .with_mean_distances(dist, dist)
        })
        .collect()
    }

    /// Same image as `decode_latents` for one latent.
    pub fn render(&self, latent: &LatentVector) -> Result<Raster, GatewayError> {
        let w = self.narrow(latent)?;
        let face = Face::from_latent(&w);
        let mut img = face.draw();
        write_tag(&mut img, &w);
        Ok(img)
    }

    /// Exact landmarks of the face `latent` renders to.
    pub fn landmarks_of(&self, latent: &LatentVector) -> Result<LandmarkSet, GatewayError> {
        Ok(Face::from_latent(&self.narrow(latent)?).landmarks())
    }

    pub fn pose_of(latent: &[f64]) -> PoseEstimate {
        PoseEstimate {
            yaw: DEGREES_PER_UNIT * latent[axis::YAW],
            pitch: DEGREES_PER_UNIT * latent[axis::PITCH],
            roll: 0.0,
        }
    }

    pub fn gender_of(latent: &[f64]) -> Gender {
        if latent[axis::GENDER] >= 0.0 {
            Gender::M
        } else {
            Gender::F
        }
    }

    /// Latent recovered from the image tag, if the image carries a valid one.
    pub fn read_tag(image: &Raster) -> Option<Vec<f64>> {
        read_tag(image)
    }

    /// Rounds through f32 so direct and wire-transported latents render alike.
    fn narrow(&self, latent: &LatentVector) -> Result<Vec<f64>, GatewayError> {
        if latent.dim() != self.config.latent_dim {
            return Err(GatewayError::BadRequest(format!(
                "latent has dimension {}, toy provider expects {}",
                latent.dim(),
                self.config.latent_dim
            )));
        }
        Ok(latent.values().iter().map(|&v| v as f32 as f64).collect())
    }

    fn tagged(&self, index: usize, image: &Raster) -> Result<Vec<f64>, GatewayError> {
        let w = read_tag(image).ok_or(GatewayError::NoFace { index })?;
        if w.len() != self.config.latent_dim {
            return Err(GatewayError::BadRequest(format!(
                "image {index} carries a {}-d latent, toy provider expects {}",
                w.len(),
                self.config.latent_dim
            )));
        }
        Ok(w)
    }

    /// Untagged images: normalised band means of the luma, one band per
    /// embedding component.
    fn pixel_features(&self, index: usize, image: &Raster) -> Result<Embedding, GatewayError> {
        let luma = image.to_luma_f64();
        if luma.is_empty() {
            return Err(GatewayError::NoFace { index });
        }
        let mean = luma.iter().sum::<f64>() / luma.len() as f64;
        let e = self.config.embedding_dim;
        let mut sums = vec![0.0; e];
        let mut counts = vec![0usize; e];
        for (i, v) in luma.iter().enumerate() {
            let band = i * e / luma.len();
            sums[band] += v - mean;
            counts[band] += 1;
        }
        let values: Vec<f64> = sums
            .iter()
            .zip(&counts)
            .map(|(s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
            .collect();
        if values.iter().all(|v| v.abs() < 1e-12) {
            return Err(GatewayError::NoFace { index });
        }
        Ok(wire_precision(Embedding::normalized(values)))
    }
}

/// Embeddings cross the wire as f32; rounding here keeps local and remote
/// results identical.
fn wire_precision(e: Embedding) -> Embedding {
    Embedding::new(e.values().iter().map(|&v| v as f32 as f64).collect())
}

impl Provider for ToyProvider {
    fn name(&self) -> &str {
        "toy"
    }

    fn capabilities(&self) -> &CapabilitySet {
        &self.capabilities
    }

    fn embedding_dim(&self) -> Option<usize> {
        Some(self.config.embedding_dim)
    }

    fn sample_latents(&self, count: usize, seed: u64) -> Result<Vec<LatentVector>, GatewayError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let v: Vec<f64> = (0..self.config.latent_dim)
                    .map(|_| {
                        let x: f64 = StandardNormal.sample(&mut rng);
                        x as f32 as f64
                    })
                    .collect();
                LatentVector::new(v).map_err(|e| GatewayError::Malformed(e.to_string()))
            })
            .collect()
    }

    fn decode_latents(&self, latents: &[LatentVector]) -> Result<Vec<Raster>, GatewayError> {
        latents.iter().map(|w| self.render(w)).collect()
    }

    fn embed_faces(&self, images: &[Raster]) -> Result<Vec<Embedding>, GatewayError> {
        images
            .iter()
            .enumerate()
            .map(|(i, img)| match read_tag(img) {
                Some(_) => {
                    let w = self.tagged(i, img)?;
                    let e = Embedding::normalized(w[..self.config.embedding_dim].to_vec());
                    if e.is_zero() {
                        Err(GatewayError::NoFace { index: i })
                    } else {
                        Ok(wire_precision(e))
                    }
                }
                None => self.pixel_features(i, img),
            })
            .collect()
    }

    fn estimate_poses(&self, images: &[Raster]) -> Result<Vec<PoseEstimate>, GatewayError> {
        images
            .iter()
            .enumerate()
            .map(|(i, img)| Ok(Self::pose_of(&self.tagged(i, img)?)))
            .collect()
    }

    fn detect_landmarks(&self, images: &[Raster]) -> Result<Vec<LandmarkSet>, GatewayError> {
        images
            .iter()
            .enumerate()
            .map(|(i, img)| Ok(Face::from_latent(&self.tagged(i, img)?).landmarks()))
            .collect()
    }

    fn label_genders(&self, images: &[Raster]) -> Result<Vec<Gender>, GatewayError> {
        images
            .iter()
            .enumerate()
            .map(|(i, img)| Ok(Self::gender_of(&self.tagged(i, img)?)))
            .collect()
    }
}

fn tag_checksum(bytes: &[u8]) -> [u8; 4] {
    let digest = Sha256::digest(bytes);
    [digest[0], digest[1], digest[2], digest[3]]
}

fn write_tag(img: &mut Raster, w: &[f64]) {
    let mut bytes = Vec::with_capacity(10 + 4 * w.len());
    bytes.extend_from_slice(TAG_MAGIC);
    bytes.extend_from_slice(&(w.len() as u16).to_le_bytes());
    for v in w {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let sum = tag_checksum(&bytes);
    bytes.extend_from_slice(&sum);
    for (x, b) in bytes.into_iter().enumerate() {
        img.set(x as u32, 0, 0, b);
    }
}

fn read_tag(img: &Raster) -> Option<Vec<f64>> {
    if img.channels() != 1 || img.width() < 10 || img.height() == 0 {
        return None;
    }
    let row = &img.data()[..img.width() as usize];
    if &row[..4] != TAG_MAGIC {
        return None;
    }
    let dim = u16::from_le_bytes([row[4], row[5]]) as usize;
    let end = 6 + 4 * dim;
    if end + 4 > row.len() {
        return None;
    }
    if tag_checksum(&row[..end]) != row[end..end + 4] {
        return None;
    }
    let values: Vec<f64> = row[6..end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    values.iter().all(|v| v.is_finite()).then_some(values)
}

/// Face geometry derived from a latent. Image-left is the subject's right.
struct Face {
    cx: f64,
    cy: f64,
    half_w: f64,
    half_h: f64,
    scale: f64,
    /// Horizontal and vertical offsets of inner features from head rotation.
    dx: f64,
    dy: f64,
    half_iod: f64,
    eye_half_width: f64,
    eye_half_open: f64,
    expression: f64,
    skin: f64,
    light: f64,
    age: f64,
    glasses: bool,
    gender: Gender,
}

impl Face {
    fn from_latent(w: &[f64]) -> Self {
        let scale = 1.0 + 0.05 * w[axis::SCALE];
        let half_w = 70.0 * scale;
        let half_h = 90.0 * scale;
        let yaw = (DEGREES_PER_UNIT * w[axis::YAW]).to_radians();
        let pitch = (DEGREES_PER_UNIT * w[axis::PITCH]).to_radians();
        let eye_half_width = 12.0 * scale;
        let ear = NEUTRAL_EAR * (1.0 + 0.35 * w[axis::EYE_OPENNESS]);
        Self {
            cx: 128.0 + 6.0 * w[axis::CENTER_X],
            cy: 136.0 + 6.0 * w[axis::CENTER_Y],
            half_w,
            half_h,
            scale,
            dx: half_w * yaw.sin(),
            dy: 0.5 * half_h * pitch.sin(),
            half_iod: 32.0 * scale * (1.0 + 0.05 * w[axis::EYE_SPACING]),
            eye_half_width,
            eye_half_open: eye_half_width * ear.max(0.0),
            expression: w[axis::EXPRESSION],
            skin: 170.0 - 8.0 * w[axis::AGE],
            light: 25.0 * w[axis::ILLUMINATION],
            age: w[axis::AGE],
            glasses: w[axis::GLASSES] > GLASSES_ABOVE,
            gender: ToyProvider::gender_of(w),
        }
    }

    fn eye_center(&self, right: bool) -> Point {
        let side = if right { -1.0 } else { 1.0 };
        Point::new(
            self.cx + self.dx + side * self.half_iod,
            self.cy - 25.0 * self.scale + self.dy,
        )
    }

    fn landmarks(&self) -> LandmarkSet {
        let s = self.scale;
        let mut p = Vec::with_capacity(LANDMARK_COUNT);
        // 1-17 jaw, image-left to image-right through the chin.
        for k in 0..17 {
            let phi = std::f64::consts::PI * (1.0 - k as f64 / 16.0);
            p.push(Point::new(
                self.cx + self.half_w * phi.cos() + 0.3 * self.dx * phi.sin(),
                self.cy + 0.1 * self.half_h + 0.9 * self.half_h * phi.sin() + 0.3 * self.dy,
            ));
        }
        // 18-22 and 23-27 brows.
        for right in [true, false] {
            let e = self.eye_center(right);
            for k in 0..5 {
                let t = k as f64 / 4.0;
                let arch = 1.0 - (2.0 * t - 1.0).powi(2);
                p.push(Point::new(e.x + (32.0 * t - 16.0) * s, e.y - 18.0 * s - 4.0 * s * arch));
            }
        }
        // 28-31 bridge, 32-36 nostrils.
        let nose_x = self.cx + 1.1 * self.dx;
        let bridge_top = self.cy - 25.0 * s + self.dy + 4.0 * s;
        let bridge_bottom = self.cy + 18.0 * s + self.dy;
        for k in 0..4 {
            let t = k as f64 / 3.0;
            p.push(Point::new(nose_x, bridge_top + t * (bridge_bottom - bridge_top)));
        }
        for k in 0..5 {
            let off = (k as f64 - 2.0) * 5.0 * s;
            p.push(Point::new(nose_x + off, bridge_bottom + 6.0 * s - 0.3 * off.abs()));
        }
        // 37-42 right eye, 43-48 left eye: corner, two upper, corner, two lower.
        for right in [true, false] {
            let e = self.eye_center(right);
            let (hw, ho) = (self.eye_half_width, self.eye_half_open);
            p.push(Point::new(e.x - hw, e.y));
            p.push(Point::new(e.x - 0.4 * hw, e.y - ho));
            p.push(Point::new(e.x + 0.4 * hw, e.y - ho));
            p.push(Point::new(e.x + hw, e.y));
            p.push(Point::new(e.x + 0.4 * hw, e.y + ho));
            p.push(Point::new(e.x - 0.4 * hw, e.y + ho));
        }
        // 49-60 outer lip, 61-68 inner lip.
        let mouth = Point::new(self.cx + 1.05 * self.dx, self.cy + 45.0 * s + self.dy);
        let half = 22.0 * s * (1.0 + 0.1 * self.expression);
        let lift = 3.0 * self.expression * s;
        let outer = |t: f64, upper: bool| {
            let x = mouth.x + half * t;
            let bulge = (1.0 - t * t).sqrt();
            let y = mouth.y - lift * t * t + if upper { -7.0 } else { 8.0 } * s * bulge;
            Point::new(x, y)
        };
        for t in [-1.0, -0.66, -0.33, 0.0, 0.33, 0.66, 1.0] {
            p.push(outer(t, true));
        }
        for t in [0.66, 0.33, 0.0, -0.33, -0.66] {
            p.push(outer(t, false));
        }
        let inner = |t: f64, upper: bool| {
            let x = mouth.x + 0.8 * half * t;
            let y = mouth.y - lift * t * t + if upper { -2.0 } else { 2.0 } * s * (1.0 - t * t).sqrt();
            Point::new(x, y)
        };
        for t in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            p.push(inner(t, true));
        }
        for t in [0.5, 0.0, -0.5] {
            p.push(inner(t, false));
        }
        LandmarkSet::new(p).expect("68 points")
    }

    fn draw(&self) -> Raster {
        let n = IMAGE_SIZE;
        let l = self.landmarks();
        let pts = l.points();
        let mut canvas = vec![BACKGROUND; (n * n) as usize];
        // Each primitive is scanned only inside its bounding box `[x0, y0, x1, y1]`.
        let mut paint = |b: [f64; 4], pred: &dyn Fn(f64, f64) -> bool, shade: &dyn Fn(f64, f64) -> f64| {
            let lo = |v: f64| v.floor().clamp(0.0, (n - 1) as f64) as u32;
            let hi = |v: f64| v.ceil().clamp(0.0, (n - 1) as f64) as u32;
            for y in lo(b[1])..=hi(b[3]) {
                for x in lo(b[0])..=hi(b[2]) {
                    let (fx, fy) = (x as f64, y as f64);
                    if pred(fx, fy) {
                        canvas[(y * n + x) as usize] = shade(fx, fy);
                    }
                }
            }
        };

        let (cx, cy, hw, hh) = (self.cx, self.cy, self.half_w, self.half_h);
        let inside_head = move |x: f64, y: f64| ((x - cx) / hw).powi(2) + ((y - cy) / hh).powi(2) <= 1.0;
        let hair = 70.0;
        let around = |c: Point, rx: f64, ry: f64| [c.x - rx - 1.0, c.y - ry - 1.0, c.x + rx + 1.0, c.y + ry + 1.0];
        let seg_box = |a: Point, b: Point, r: f64| {
            [
                a.x.min(b.x) - r - 1.0,
                a.y.min(b.y) - r - 1.0,
                a.x.max(b.x) + r + 1.0,
                a.y.max(b.y) + r + 1.0,
            ]
        };
        let poly_box = |p: &[Point]| {
            p.iter().fold(
                [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
                |b, q| [b[0].min(q.x), b[1].min(q.y), b[2].max(q.x), b[3].max(q.y)],
            )
        };
        let head_box = around(Point::new(cx, cy), 1.2 * hw, 1.25 * hh);
        match self.gender {
            Gender::F => paint(
                head_box,
                &|x, y| ((x - cx) / (hw * 1.18)).powi(2) + ((y - cy + 0.1 * hh) / (hh * 1.1)).powi(2) <= 1.0,
                &|_, _| hair,
            ),
            Gender::M => paint(
                head_box,
                &|x, y| ((x - cx) / (hw * 1.06)).powi(2) + ((y - cy) / (hh * 1.06)).powi(2) <= 1.0 && y < cy - 0.5 * hh,
                &|_, _| hair,
            ),
        }
        let (skin, light) = (self.skin, self.light);
        paint(head_box, &inside_head, &|x, _| {
            (skin + light * (x - cx) / hw).clamp(60.0, 240.0)
        });
        if self.age > 0.5 {
            for k in 0..2 {
                let y0 = cy - 0.62 * hh + 6.0 * k as f64;
                paint(
                    around(Point::new(cx, y0), 0.35 * hw, 0.8),
                    &|x, y| (y - y0).abs() < 0.8 && (x - cx).abs() < 0.35 * hw,
                    &|_, _| (skin - 35.0).max(0.0),
                );
            }
        }
        for brow in [&pts[17..22], &pts[22..27]] {
            for seg in brow.windows(2) {
                let (a, b) = (seg[0], seg[1]);
                paint(
                    seg_box(a, b, 1.8),
                    &|x, y| segment_distance(x, y, a, b) <= 1.8,
                    &|_, _| 60.0,
                );
            }
        }
        for eye in [&pts[36..42], &pts[42..48]] {
            let poly = eye.to_vec();
            paint(poly_box(&poly), &|x, y| point_in_polygon(x, y, &poly), &|_, _| 235.0);
            let (a, b) = (eye[0], eye[3]);
            paint(
                seg_box(a, b, 0.7),
                &|x, y| segment_distance(x, y, a, b) <= 0.7,
                &|_, _| 30.0,
            );
            let c = a.lerp(&b, 0.5);
            let r = self.eye_half_open.min(0.45 * self.eye_half_width);
            paint(around(c, r, r), &|x, y| Point::new(x, y).distance(&c) <= r, &|_, _| {
                25.0
            });
        }
        let nose_shade = (skin - 50.0).max(0.0);
        for seg in pts[27..31].windows(2).chain(pts[31..36].windows(2)) {
            let (a, b) = (seg[0], seg[1]);
            paint(
                seg_box(a, b, 1.0),
                &|x, y| segment_distance(x, y, a, b) <= 1.0,
                &|_, _| nose_shade,
            );
        }
        let lips = pts[48..60].to_vec();
        paint(poly_box(&lips), &|x, y| point_in_polygon(x, y, &lips), &|_, _| 110.0);
        let inner = pts[60..68].to_vec();
        paint(poly_box(&inner), &|x, y| point_in_polygon(x, y, &inner), &|_, _| 50.0);
        if self.glasses {
            let frame = 20.0;
            for right in [true, false] {
                let e = self.eye_center(right);
                let (rx, ry) = (1.5 * self.eye_half_width, 1.1 * self.eye_half_width);
                paint(
                    around(e, rx, ry),
                    &|x, y| {
                        let q = ((x - e.x) / rx).powi(2) + ((y - e.y) / ry).powi(2);
                        (0.78..=1.0).contains(&q)
                    },
                    &|_, _| frame,
                );
            }
            // Four bars across the nose bridge.
            let (r, left) = (self.eye_center(true), self.eye_center(false));
            for off in [-4.0, 4.0, 12.0, 20.0] {
                let a = Point::new(r.x + 1.5 * self.eye_half_width, r.y + off * self.scale);
                let b = Point::new(left.x - 1.5 * self.eye_half_width, left.y + off * self.scale);
                paint(
                    seg_box(a, b, 1.6),
                    &|x, y| segment_distance(x, y, a, b) <= 1.6,
                    &|_, _| frame,
                );
            }
        }
        Raster::new(
            n,
            n,
            1,
            canvas.into_iter().map(morphforge_core::raster::quantize).collect(),
        )
        .expect("square canvas")
    }
}

fn segment_distance(x: f64, y: f64, a: Point, b: Point) -> f64 {
    let (vx, vy) = (b.x - a.x, b.y - a.y);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((x - a.x) * vx + (y - a.y) * vy) / len2).clamp(0.0, 1.0)
    };
    (x - a.x - t * vx).hypot(y - a.y - t * vy)
}

fn point_in_polygon(x: f64, y: f64, poly: &[Point]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a.y > y) != (b.y > y) && x < a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y) {
            inside = !inside;
        }
    }
    inside
}
