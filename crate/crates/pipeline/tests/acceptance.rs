//! Acceptance suite: one line per criterion, run with
//! `cargo test -p morphforge --test acceptance`.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use common::{fixture, toy_config};
use morphforge::eval::{self, KlOptions};
use morphforge::{validate_manifest, Pipeline};
use morphforge_core::evaluation::{
    compute_map, det_curve, kl_divergence, AttemptScore, ContributorPolicy, Polarity, KL_BINS, KL_EPSILON,
};
use morphforge_core::gates::{canny_luma, cosine_distance, diversity_check, eye_aspect_ratios, pose_gate, CannyParams};
use morphforge_core::latent::{
    edit_frpca, fit_pca, neutralize, project_to_boundary, EditMode, LatentVector, SemanticDirection,
};
use morphforge_core::morph::{delaunay, demorph, demorph_geometry, morph_geometry, morph_pair};
use morphforge_core::pairing::PairingMode;
use morphforge_core::{Embedding, Gender, LandmarkSet, Point, PoseEstimate, Raster, Split, SynvBlock};
use morphforge_gateway::ToyProvider;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

type Outcome = Result<String, String>;
type Criterion = (&'static str, u64, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($msg)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // Box-Muller keeps the harness independent of the library's sampler.
    (0..n)
        .map(|_| {
            let (u, v): (f64, f64) = (r.random::<f64>().max(1e-300), r.random());
            (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

// ---------------------------------------------------------------------------

fn latent_math() -> Outcome {
    const DIM: usize = 32;
    let mut r = rng(1);
    let mut worst_proj: f64 = 0.0;
    for case in 0..1000 {
        let w = gaussian(&mut r, DIM);
        let scale = 10f64.powf(r.random_range(-2.0..3.0));
        let w = LatentVector::new(w.iter().map(|v| v * scale).collect()).unwrap();
        let dirs: Vec<SemanticDirection> = ["pose", "illumination", "expression"]
            .iter()
            .map(|name| SemanticDirection::new(*name, gaussian(&mut r, DIM)).unwrap())
            .collect();
        let wn = w.norm();

        let p = project_to_boundary(&w, &dirs[0]).unwrap();
        let off = dot(p.values(), dirs[0].normal()).abs() / wn;
        let again = project_to_boundary(&p, &dirs[0]).unwrap();
        let drift = p
            .values()
            .iter()
            .zip(again.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / wn;
        worst_proj = worst_proj.max(off).max(drift);
        ensure!(
            off <= 1e-6 && drift <= 1e-6,
            "case {case}: projection residual {off:e}, idempotence drift {drift:e}"
        );

        let d = r.random_range(0.0..3.0);
        let n = neutralize(&w, &dirs[0], &dirs[1], &dirs[2], d).unwrap();
        let along = dot(n.values(), dirs[2].normal());
        ensure!(
            (along + d).abs() <= 1e-6 * (wn + d).max(1.0),
            "case {case}: neutralised expression coordinate {along} != -{d}"
        );

        // Full-rank PCA: orthonormal axes that reconstruct the sample exactly.
        let (n_samples, dim) = (12, 6);
        let samples: Vec<LatentVector> = (0..n_samples)
            .map(|_| LatentVector::new(gaussian(&mut r, dim)).unwrap())
            .collect();
        let fit = fit_pca(&samples, dim).map_err(|e| format!("case {case}: {e}"))?;
        for (i, a) in fit.components.iter().enumerate() {
            for (j, b) in fit.components.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                let got = dot(a.normal(), b.normal());
                ensure!((got - want).abs() <= 1e-5, "case {case}: axes {i},{j} dot {got}");
            }
        }
        for s in &samples {
            let centred: Vec<f64> = s.values().iter().zip(&fit.mean).map(|(v, m)| v - m).collect();
            let mut rec = fit.mean.clone();
            for c in &fit.components {
                let k = dot(&centred, c.normal());
                rec.iter_mut().zip(c.normal()).for_each(|(x, n)| *x += k * n);
            }
            let err = rec
                .iter()
                .zip(s.values())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            ensure!(
                err <= 1e-5 * norm(s.values()).max(1.0),
                "case {case}: reconstruction error {err:e}"
            );
        }
    }

    // FRPCA on a shared 8-axis PCA of 32-d latents, embedding = leading half.
    let pool: Vec<LatentVector> = (0..64)
        .map(|_| LatentVector::new(gaussian(&mut r, DIM)).unwrap())
        .collect();
    let axes = fit_pca(&pool, 8).unwrap().components;
    let embed = |w: &LatentVector| -> Result<Embedding, Box<dyn std::error::Error + Send + Sync>> {
        Ok(Embedding::normalized(w.values()[..16].to_vec()))
    };
    let tau = 0.45;
    for case in 0..1000u64 {
        let base = LatentVector::new(gaussian(&mut r, DIM)).unwrap();
        let a = edit_frpca(&base, &axes, case, embed, tau).map_err(|e| format!("frpca case {case}: {e}"))?;
        let b = edit_frpca(&base, &axes, case, embed, tau).unwrap();
        ensure!(a == b, "frpca case {case}: not deterministic");
        let (e0, e1) = (&base.values()[..16], &a.latent.values()[..16]);
        let d = 1.0 - dot(e0, e1) / (norm(e0) * norm(e1));
        ensure!(d > 0.0 && d <= tau + 1e-12, "frpca case {case}: distance {d}");
        ensure!(
            (d - a.distance).abs() <= 1e-9,
            "frpca case {case}: reported {} vs {d}",
            a.distance
        );
    }
    Ok(format!("1000 cases, worst projection residual {worst_proj:.1e}"))
}

// ---------------------------------------------------------------------------

fn toy() -> ToyProvider {
    ToyProvider::new(Default::default()).unwrap()
}

fn toy_latent(r: &mut ChaCha8Rng) -> LatentVector {
    let mut w: Vec<f64> = gaussian(r, 32).iter().map(|v| 0.6 * v).collect();
    w[5] = 0.0;
    w[6] = 0.0;
    LatentVector::new(w).unwrap()
}

/// Point `d` strictly inside the circumcircle of `a, b, c` (any orientation).
fn in_circumcircle(a: Point, b: Point, c: Point, d: Point) -> bool {
    let m = |p: Point| (p.x - d.x, p.y - d.y, (p.x - d.x).powi(2) + (p.y - d.y).powi(2));
    let (ax, ay, aa) = m(a);
    let (bx, by, bb) = m(b);
    let (cx, cy, cc) = m(c);
    let det = ax * (by * cc - bb * cy) - ay * (bx * cc - bb * cx) + aa * (bx * cy - by * cx);
    let orient = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    let scale = [a, b, c]
        .iter()
        .map(|p| (p.x - d.x).abs().max((p.y - d.y).abs()))
        .fold(0.0, f64::max)
        .powi(4);
    det * orient.signum() > 1e-9 * scale
}

fn hull_size(points: &[Point]) -> usize {
    let mut p: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.y)).collect();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 {
            Box::new(p.iter())
        } else {
            Box::new(p.iter().rev())
        };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull.len()
}

fn blob_image(points: &[Point], marked: &[usize]) -> Raster {
    Raster::from_fn_gray(256, 256, |x, y| {
        let ink = marked
            .iter()
            .map(|&k| {
                let (dx, dy) = (x as f64 - points[k].x, y as f64 - points[k].y);
                (-(dx * dx + dy * dy) / (2.0 * 1.3 * 1.3)).exp()
            })
            .fold(0.0, f64::max);
        (250.0 - 220.0 * ink).round() as u8
    })
}

fn ink_centroid(img: &Raster, at: Point, radius: i64) -> Point {
    let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
    for y in (at.y.round() as i64 - radius)..=(at.y.round() as i64 + radius) {
        for x in (at.x.round() as i64 - radius)..=(at.x.round() as i64 + radius) {
            if x < 0 || y < 0 || x >= img.width() as i64 || y >= img.height() as i64 {
                continue;
            }
            let w = (250.0 - img.get(x as u32, y as u32, 0) as f64).max(0.0);
            sx += w * x as f64;
            sy += w * y as f64;
            sw += w;
        }
    }
    Point::new(sx / sw, sy / sw)
}

fn morph_engine() -> Outcome {
    let toy = toy();
    let mut r = rng(2);

    for pair in 0..3 {
        let (wa, wb) = (toy_latent(&mut r), toy_latent(&mut r));
        let (a, b) = (toy.render(&wa).unwrap(), toy.render(&wb).unwrap());
        let (la, lb) = (toy.landmarks_of(&wa).unwrap(), toy.landmarks_of(&wb).unwrap());
        ensure!(
            morph_pair(&a, &la, &b, &lb, 0.0).unwrap() == a,
            "pair {pair}: alpha 0 differs from A"
        );
        ensure!(
            morph_pair(&a, &la, &b, &lb, 1.0).unwrap() == b,
            "pair {pair}: alpha 1 differs from B"
        );
        ensure!(
            morph_pair(&a, &la, &b, &lb, 0.5).unwrap() == morph_pair(&b, &lb, &a, &la, 0.5).unwrap(),
            "pair {pair}: 0.5 morph depends on order"
        );
        for alpha in [0.25, 0.5, 0.8] {
            ensure!(
                morph_pair(&a, &la, &a, &la, alpha).unwrap() == a,
                "pair {pair}: self-morph at {alpha} changed A"
            );
        }
    }

    let mut triangles = 0;
    for set in 0..1000 {
        let n = r.random_range(3..=50);
        let pts: Vec<Point> = (0..n)
            .map(|_| Point::new(r.random_range(0.0..256.0), r.random_range(0.0..256.0)))
            .collect();
        let t = delaunay(&pts).map_err(|e| format!("set {set}: {e}"))?;
        let h = hull_size(&pts);
        ensure!(
            t.triangles.len() == 2 * n - 2 - h,
            "set {set}: {} triangles for {n} points with {h} on the hull",
            t.triangles.len()
        );
        for tri in &t.triangles {
            let [a, b, c] = tri.map(|i| pts[i]);
            for (i, d) in pts.iter().enumerate() {
                if !tri.contains(&i) && in_circumcircle(a, b, c, *d) {
                    return Err(format!("set {set}: point {i} inside circumcircle of {tri:?}"));
                }
            }
        }
        triangles += t.triangles.len();
    }

    // De-morph round trip: ink blobs at a subject's landmarks reappear at
    // those landmarks after morphing with B and de-morphing with B's probe.
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for fixture in 0..3 {
        let (wa, wb) = (toy_latent(&mut r), toy_latent(&mut r));
        let (la, lb) = (toy.landmarks_of(&wa).unwrap(), toy.landmarks_of(&wb).unwrap());
        ensure!(
            la.inter_ocular_distance() >= 60.0,
            "fixture {fixture}: inter-ocular distance below 60 px"
        );
        let lm = morph_geometry(&la, &lb, 0.5, 256, 256);
        let isolated = |l: &LandmarkSet, k: usize| {
            l.points()
                .iter()
                .enumerate()
                .all(|(j, p)| j == k || p.distance(&l.points()[k]) >= 10.0)
        };
        let marked: Vec<usize> = (0..68)
            .filter(|&k| isolated(&la, k) && isolated(&lb, k) && isolated(&lm, k))
            .collect();
        ensure!(
            marked.len() >= 10,
            "fixture {fixture}: only {} isolated landmarks",
            marked.len()
        );

        let (ia, ib) = (blob_image(la.points(), &marked), blob_image(lb.points(), &marked));
        let m = morph_pair(&ia, &la, &ib, &lb, 0.5).unwrap();
        let geometry = demorph_geometry(&lm, &lb, 0.5).unwrap();
        let recovered = demorph(&m, &lm, &ib, &lb, 0.5).unwrap();
        for k in 0..68 {
            let e = geometry.points()[k].distance(&la.points()[k]);
            ensure!(e <= 1.0, "fixture {fixture}: landmark {k} geometry off by {e}");
        }
        for &k in &marked {
            let c = ink_centroid(&recovered, la.points()[k], 4);
            let e = c.distance(&la.points()[k]);
            worst = worst.max(e);
            ensure!(e <= 1.0, "fixture {fixture}: landmark {k} recovered {e:.3} px away");
            checked += 1;
        }
    }
    Ok(format!(
        "1000 triangulations ({triangles} triangles), {checked} de-morphed landmarks within {worst:.3} px"
    ))
}

// ---------------------------------------------------------------------------

fn brute_force_map(rows: &[AttemptScore], thr: &BTreeMap<String, f64>, both: bool) -> Vec<Vec<f64>> {
    let morphs: BTreeSet<&str> = rows.iter().map(|s| s.morph_id.as_str()).collect();
    let systems: Vec<&str> = rows
        .iter()
        .map(|s| s.frs_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let max_r = rows.iter().map(|s| s.attempt).max().unwrap();
    let verified = |m: &str, f: &str, r: u32| {
        let slots: BTreeSet<u8> = rows.iter().filter(|s| s.morph_id == m).map(|s| s.slot).collect();
        let passes = |slot: u8| {
            rows.iter()
                .filter(|s| s.morph_id == m && s.frs_id == f && s.slot == slot && s.score >= thr[f])
                .count()
                >= r as usize
        };
        if both {
            slots.iter().all(|&s| passes(s))
        } else {
            slots.iter().any(|&s| passes(s))
        }
    };
    let mut out = Vec::new();
    for r in 1..=max_r {
        let mut row = Vec::new();
        for c in 1..=systems.len() {
            // Some subset of exactly c systems verifies the morph.
            let hits = morphs
                .iter()
                .filter(|m| {
                    (0u32..1 << systems.len())
                        .filter(|mask| mask.count_ones() as usize == c)
                        .any(|mask| {
                            systems
                                .iter()
                                .enumerate()
                                .filter(|(i, _)| mask & (1 << i) != 0)
                                .all(|(_, f)| verified(m, f, r))
                        })
                })
                .count();
            row.push(hits as f64 / morphs.len() as f64);
        }
        out.push(row);
    }
    out
}

fn metric_oracles() -> Outcome {
    let mut r = rng(3);
    let levels = [0.1, 0.3, 0.5, 0.7, 0.9];
    for case in 0..1000 {
        let n_frs = r.random_range(1..=3);
        let names: Vec<String> = (0..n_frs).map(|i| format!("frs{i}")).collect();
        let thr: BTreeMap<String, f64> = names
            .iter()
            .map(|n| (n.clone(), levels[r.random_range(0..5)]))
            .collect();
        let mut rows = Vec::new();
        for m in 0..r.random_range(1..=4) {
            let slots: &[u8] = if r.random_bool(0.8) { &[1, 2] } else { &[1] };
            for f in &names {
                for &slot in slots {
                    for attempt in 1..=r.random_range(1..=3u32) {
                        rows.push(AttemptScore {
                            morph_id: format!("m{m}"),
                            slot,
                            attempt,
                            frs_id: f.clone(),
                            score: levels[r.random_range(0..5)],
                        });
                    }
                }
            }
        }
        let both = compute_map(&rows, &thr, ContributorPolicy::Both).map_err(|e| format!("case {case}: {e}"))?;
        let either = compute_map(&rows, &thr, ContributorPolicy::Either).unwrap();
        ensure!(
            both.cells == brute_force_map(&rows, &thr, true),
            "case {case}: both-policy MAP differs from enumeration"
        );
        ensure!(
            either.cells == brute_force_map(&rows, &thr, false),
            "case {case}: either-policy MAP differs from enumeration"
        );
        for map in [&both, &either] {
            for (i, row) in map.cells.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    ensure!(j == 0 || *v <= row[j - 1], "case {case}: MAP grows along systems");
                    ensure!(
                        i == 0 || *v <= map.cells[i - 1][j],
                        "case {case}: MAP grows along attempts"
                    );
                    ensure!(either.cells[i][j] >= both.cells[i][j], "case {case}: either below both");
                }
            }
        }
    }

    for case in 0..1000 {
        let bf: Vec<f64> = (0..r.random_range(1..20)).map(|_| r.random_range(-1.0..2.0)).collect();
        let at: Vec<f64> = (0..r.random_range(1..20)).map(|_| r.random_range(-2.0..1.0)).collect();
        let curve = det_curve(&bf, &at).unwrap();
        let (first, last) = (curve.points[0], *curve.points.last().unwrap());
        ensure!(
            (first.macer, first.bpcer) == (1.0, 0.0),
            "det case {case}: first point {first:?}"
        );
        ensure!(
            (last.macer, last.bpcer) == (0.0, 1.0),
            "det case {case}: last point {last:?}"
        );
        for w in curve.points.windows(2) {
            ensure!(
                w[1].threshold > w[0].threshold && w[1].macer <= w[0].macer && w[1].bpcer >= w[0].bpcer,
                "det case {case}: not monotone at {:?}",
                w[1]
            );
        }
        for p in &curve.points[1..curve.points.len() - 1] {
            let macer = at.iter().filter(|&&s| s >= p.threshold).count() as f64 / at.len() as f64;
            let bpcer = bf.iter().filter(|&&s| s < p.threshold).count() as f64 / bf.len() as f64;
            ensure!(
                (p.macer, p.bpcer) == (macer, bpcer),
                "det case {case}: rates at {}",
                p.threshold
            );
        }

        let p: Vec<f64> = (0..r.random_range(1..40)).map(|_| r.random_range(0.0..1.0)).collect();
        let q: Vec<f64> = (0..r.random_range(1..40)).map(|_| r.random_range(-0.5..1.5)).collect();
        let self_kl = kl_divergence(&p, &p, KL_BINS, KL_EPSILON).unwrap();
        ensure!(self_kl.abs() <= 1e-12, "kl case {case}: KL(P||P) = {self_kl:e}");
        let kl = kl_divergence(&p, &q, KL_BINS, KL_EPSILON).unwrap();
        ensure!(kl >= 0.0, "kl case {case}: negative divergence {kl}");
    }
    let two_bin = kl_divergence(&[0.0, 0.0], &[0.0, 1.0], 2, KL_EPSILON).unwrap();
    ensure!(
        (two_bin - std::f64::consts::LN_2).abs() <= 1e-3,
        "two-bin example gave {two_bin}"
    );
    Ok(format!(
        "1000 MAP instances, 1000 DET curves, 1000 KL pairs, two-bin {two_bin:.6}"
    ))
}

// ---------------------------------------------------------------------------

fn next_up(v: f64) -> f64 {
    if v >= 0.0 {
        f64::from_bits(v.to_bits() + 1)
    } else {
        f64::from_bits(v.to_bits() - 1)
    }
}

fn next_down(v: f64) -> f64 {
    -next_up(-v)
}

fn gates() -> Outcome {
    let mut r = rng(4);
    let edges = [-5.0, 5.0];
    let mut probes: Vec<f64> = vec![0.0, -90.0, 90.0, -5.5, 5.5];
    for e in edges {
        probes.extend([e, next_up(e), next_down(e)]);
    }
    for &yaw in &probes {
        for &pitch in &probes {
            let inside = (-5.0..=5.0).contains(&yaw) && (-5.0..=5.0).contains(&pitch);
            for roll in [0.0, 45.0, -170.0] {
                ensure!(
                    pose_gate(&PoseEstimate { yaw, pitch, roll }) == inside,
                    "pose ({yaw}, {pitch}, {roll}) should be {}",
                    if inside { "accepted" } else { "rejected" }
                );
            }
        }
    }
    for _ in 0..1000 {
        let (yaw, pitch, roll): (f64, f64, f64) = (
            r.random_range(-10.0..10.0),
            r.random_range(-10.0..10.0),
            r.random_range(-180.0..180.0),
        );
        let inside = yaw.abs() <= 5.0 && pitch.abs() <= 5.0;
        ensure!(
            pose_gate(&PoseEstimate { yaw, pitch, roll }) == inside,
            "pose ({yaw}, {pitch})"
        );
    }

    let e = |v: &[f64]| Embedding::normalized(v.to_vec());
    let anchor = e(&[1.0, 0.0, 0.0]);
    let at = |d: f64| e(&[1.0 - d, (1.0 - (1.0 - d).powi(2)).sqrt(), 0.0]);
    ensure!(
        diversity_check(&anchor, &[], 0.45).unwrap().accepted(),
        "empty gallery rejected"
    );
    ensure!(
        !diversity_check(&anchor, std::slice::from_ref(&anchor), 0.45)
            .unwrap()
            .accepted(),
        "duplicate accepted"
    );
    ensure!(
        diversity_check(&anchor, &[e(&[0.0, 1.0, 0.0])], 0.45)
            .unwrap()
            .accepted(),
        "orthogonal rejected"
    );
    ensure!(
        !diversity_check(&anchor, &[at(0.44)], 0.45).unwrap().accepted(),
        "distance 0.44 accepted"
    );
    ensure!(
        diversity_check(&anchor, &[at(0.46)], 0.45).unwrap().accepted(),
        "distance 0.46 rejected"
    );
    for case in 0..1000 {
        let (c, g) = (
            Embedding::normalized(gaussian(&mut r, 8)),
            Embedding::normalized(gaussian(&mut r, 8)),
        );
        let d = cosine_distance(&c, &g).unwrap();
        let gallery = [g];
        let accepted = diversity_check(&c, &gallery, 0.45).unwrap().accepted();
        ensure!(
            accepted == (d >= 0.45),
            "diversity case {case}: distance {d}, accepted {accepted}"
        );
        ensure!(
            diversity_check(&c, &gallery, d).unwrap().accepted(),
            "case {case}: reject at distance == threshold"
        );
        ensure!(
            !diversity_check(&c, &gallery, next_up(d)).unwrap().accepted(),
            "case {case}: accept just below threshold"
        );
    }

    let toy = toy();
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let l = toy.landmarks_of(&toy_latent(&mut r)).unwrap();
        let (left, right) = eye_aspect_ratios(&l).unwrap();
        let (theta, s) = (r.random_range(-3.1..3.1f64), r.random_range(0.3..4.0));
        let (tx, ty) = (r.random_range(-500.0..500.0), r.random_range(-500.0..500.0));
        let moved = l.map(|p| {
            Point::new(
                s * (theta.cos() * p.x - theta.sin() * p.y) + tx,
                s * (theta.sin() * p.x + theta.cos() * p.y) + ty,
            )
        });
        let (l2, r2) = eye_aspect_ratios(&moved).unwrap();
        let err = (left - l2).abs().max((right - r2).abs());
        worst = worst.max(err);
        ensure!(err <= 1e-6, "ear case {case}: changed by {err:e} under similarity");
    }

    let p = CannyParams::default();
    let (w, h) = (64usize, 64usize);
    for level in [0.0, 0.37, 1.0] {
        let edges = canny_luma(&vec![level; w * h], w, h, p).unwrap();
        ensure!(edges.count() == 0, "constant {level} image has {} edges", edges.count());
    }
    let margin = p.support();
    for x0 in [20usize, 31, 44] {
        for vertical in [true, false] {
            let luma: Vec<f64> = (0..w * h)
                .map(|i| {
                    let (x, y) = (i % w, i / w);
                    let along = if vertical { x } else { y };
                    if along < x0 {
                        0.15
                    } else {
                        0.85
                    }
                })
                .collect();
            let edges = canny_luma(&luma, w, h, p).unwrap();
            for y in 0..h {
                for x in 0..w {
                    let along = if vertical { x } else { y };
                    if edges.get(x, y) != 0 {
                        ensure!(
                            along + 1 >= x0 && along <= x0,
                            "step at {x0} ({}): edge pixel at ({x}, {y})",
                            if vertical { "vertical" } else { "horizontal" }
                        );
                    }
                }
            }
            for across in margin..(if vertical { h } else { w }) - margin {
                let found = (x0 - 1..=x0).any(|along| {
                    let (x, y) = if vertical { (along, across) } else { (across, along) };
                    edges.get(x, y) != 0
                });
                ensure!(found, "step at {x0}: no edge on line {across}");
            }
        }
    }
    Ok(format!(
        "pose box exact, diversity boundary inclusive, EAR drift {worst:.1e}, Canny step within 1 px"
    ))
}

// ---------------------------------------------------------------------------

fn tree_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                if rel != morphforge::dataset::PROVENANCE {
                    out.insert(rel, fs::read(&path).unwrap());
                }
            }
        }
    }
    out
}

fn build_toy(dir: &Path) -> Result<morphforge::DatasetManifest, String> {
    let config = toy_config(6, 0, 0);
    ensure!(config.runtime.threads == 1, "toy config should run single-threaded");
    let p = Pipeline::open(config, dir).map_err(|e| e.to_string())?;
    p.gen_base().map_err(|e| format!("gen-base: {e}"))?;
    for mode in EditMode::ALL {
        p.mate(mode).map_err(|e| format!("mate {mode}: {e}"))?;
    }
    p.pair(PairingMode::Full).map_err(|e| format!("pair: {e}"))?;
    let m = p.morph(0.5).map_err(|e| format!("morph: {e}"))?;
    let v = validate_manifest(&p.dataset, &m, &p.config);
    ensure!(v.is_empty(), "{} violations, first {:?}", v.len(), v[0]);
    Ok(m)
}

fn end_to_end() -> Outcome {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let m = build_toy(a.path())?;
    ensure!(m.subjects.len() == 12, "{} subjects", m.subjects.len());
    for g in Gender::ALL {
        let n = m
            .subjects
            .iter()
            .filter(|s| s.gender == g && s.split == Split::Train)
            .count();
        ensure!(n == 6, "{n} training subjects of gender {g}");
    }
    let want = [(EditMode::Ifgs, 4), (EditMode::Ifgd, 4), (EditMode::Frpca, 2)];
    ensure!(m.mated.len() == 12, "mated samples for {} subjects", m.mated.len());
    for (subject, modes) in &m.mated {
        for (mode, n) in want {
            let got = modes.get(&mode).map_or(0, |l| l.samples.len());
            ensure!(got == n, "{subject}: {got} {mode} samples, expected {n}");
        }
    }
    ensure!(
        m.pairs.len() == 30 && m.morphs.len() == 30,
        "{} pairs, {} morphs",
        m.pairs.len(),
        m.morphs.len()
    );
    ensure!(m.failures.is_empty(), "failures: {:?}", m.failures);

    build_toy(b.path())?;
    let (ta, tb) = (tree_bytes(a.path()), tree_bytes(b.path()));
    ensure!(ta.keys().eq(tb.keys()), "reruns wrote different file sets");
    for (k, v) in &ta {
        ensure!(tb[k] == *v, "{k} differs between reruns");
    }
    Ok(format!(
        "12 subjects, 4/4/2 mated each, 30 morphs, {} files identical on rerun",
        ta.len()
    ))
}

// ---------------------------------------------------------------------------

fn format_round_trips() -> Outcome {
    let mut r = rng(6);
    let specials = [
        0.0f32,
        -0.0,
        f32::MIN_POSITIVE,
        1e-45,
        -1e-45,
        f32::MAX,
        f32::MIN,
        1.0 / 3.0,
    ];
    let dir = TempDir::new().unwrap();
    for case in 0..200 {
        let dim = r.random_range(1..40);
        let rows = r.random_range(0..20);
        let data: Vec<f32> = (0..dim * rows)
            .map(|i| {
                if i % 7 == 0 {
                    specials[r.random_range(0..specials.len())]
                } else {
                    f32::from_bits(r.random::<u32>() & 0xbfff_ffff)
                }
            })
            .collect();
        let block = SynvBlock { dim, data };
        let bytes = block.encode().map_err(|e| format!("case {case}: {e}"))?;
        let back = SynvBlock::decode(&bytes).map_err(|e| format!("case {case}: {e}"))?;
        let bits = |b: &SynvBlock| b.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        ensure!(
            back.dim == dim && bits(&back) == bits(&block),
            "case {case}: decode changed values"
        );
        ensure!(
            back.encode().unwrap() == bytes,
            "case {case}: re-encoding changed bytes"
        );
        let path = dir.path().join(format!("{case}.synv"));
        block.write(&path).unwrap();
        ensure!(
            bits(&SynvBlock::read(&path).unwrap()) == bits(&block),
            "case {case}: file round trip"
        );
    }

    let golden = |name: &str| fs::read(fixture(&format!("eval/{name}"))).unwrap();
    let thr: BTreeMap<String, f64> = [("A".to_string(), 0.5), ("B".to_string(), 0.7)].into();
    let attempts = fixture("eval/attempts.csv");
    let outputs = [
        (
            "map_both.csv",
            eval::map_table(&attempts, &thr, ContributorPolicy::Both),
        ),
        (
            "map_either.csv",
            eval::map_table(&attempts, &thr, ContributorPolicy::Either),
        ),
        (
            "det.csv",
            eval::det_table(&fixture("eval/detection.csv"), Polarity::Higher),
        ),
        (
            "kld.csv",
            eval::kld_table(
                &fixture("eval/quality.csv"),
                &KlOptions {
                    reference: None,
                    reverse: false,
                    bins: KL_BINS,
                    epsilon: KL_EPSILON,
                },
            ),
        ),
    ];
    for (name, out) in outputs {
        let out = out.map_err(|e| format!("{name}: {e}"))?;
        ensure!(
            out == golden(name),
            "{name} differs from golden:\n{}",
            String::from_utf8_lossy(&out)
        );
    }
    Ok("200 SYNV blocks bit-exact, 4 eval tables byte-exact".into())
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [Criterion; 6] = [
        ("latent math suite", 5, latent_math),
        ("morph engine suite", 60, morph_engine),
        ("metric oracles", 10, metric_oracles),
        ("gate suite", 10, gates),
        ("end-to-end toy pipeline", 60, end_to_end),
        ("format round-trips", 10, format_round_trips),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, budget, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > Duration::from_secs(budget) => Err(format!("{detail}; over the {budget} s budget")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!(
                "PASS  {name:<26} {:>6.2} s / {budget} s  {detail}",
                elapsed.as_secs_f64()
            ),
            Err(reason) => {
                failed += 1;
                println!(
                    "FAIL  {name:<26} {:>6.2} s / {budget} s  {reason}",
                    elapsed.as_secs_f64()
                );
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
