//! Delaunay triangulation: a sorted sweep builds a triangulation of the
//! convex hull, then Lawson edge flips make every edge locally Delaunay.

use std::collections::HashMap;

use super::MorphError;
use crate::types::Point;

/// In-circle determinant threshold (on unit-normalised coordinates) above
/// which an edge is flipped.
pub const INCIRCLE_TOLERANCE: f64 = 1e-12;
const ORIENT_TOLERANCE: f64 = 1e-14;

/// Triangles index into `vertices`; each is counter-clockwise in the
/// `(x, y)` coordinate frame (clockwise on screen, where y points down).
#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
}

impl Triangulation {
    /// Signed doubled area of triangle `t` over an arbitrary point list.
    pub fn doubled_area(points: &[Point], t: [usize; 3]) -> f64 {
        orient(points[t[0]], points[t[1]], points[t[2]])
    }
}

#[inline]
pub(crate) fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Positive iff `d` lies inside the circumcircle of counter-clockwise `abc`.
#[inline]
pub(crate) fn incircle(a: Point, b: Point, c: Point, d: Point) -> f64 {
    let (adx, ady) = (a.x - d.x, a.y - d.y);
    let (bdx, bdy) = (b.x - d.x, b.y - d.y);
    let (cdx, cdy) = (c.x - d.x, c.y - d.y);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

/// Triangulates `points`. Exact duplicates are kept in `vertices` but only
/// the first occurrence is used by triangles.
pub fn delaunay(points: &[Point]) -> Result<Triangulation, MorphError> {
    if points.len() < 3 {
        return Err(MorphError::TooFewPoints(points.len()));
    }
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(MorphError::NonFinite);
    }

    // Work on coordinates scaled into the unit square so tolerances are
    // independent of the pixel scale.
    let min_x = points.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let min_y = points.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let max_x = points.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let max_y = points.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let extent = (max_x - min_x).max(max_y - min_y);
    if extent == 0.0 {
        return Err(MorphError::Collinear);
    }
    let q: Vec<Point> = points
        .iter()
        .map(|p| Point::new((p.x - min_x) / extent, (p.y - min_y) / extent))
        .collect();

    let mut order: Vec<usize> = (0..q.len()).collect();
    order.sort_by(|&a, &b| {
        q[a].x
            .partial_cmp(&q[b].x)
            .unwrap()
            .then(q[a].y.partial_cmp(&q[b].y).unwrap())
            .then(a.cmp(&b))
    });
    order.dedup_by(|b, a| q[*a] == q[*b]);
    if order.len() < 3 {
        return Err(MorphError::Collinear);
    }

    // Seed: the leading collinear run plus the first point off its line.
    let (s0, s1) = (order[0], order[1]);
    let Some(k) = (2..order.len()).find(|&k| orient(q[s0], q[s1], q[order[k]]).abs() > ORIENT_TOLERANCE) else {
        return Err(MorphError::Collinear);
    };
    let apex = order[k];
    let left = orient(q[s0], q[s1], q[apex]) > 0.0;
    let mut triangles: Vec<[usize; 3]> = Vec::with_capacity(2 * order.len());
    for i in 0..k - 1 {
        let (a, b) = (order[i], order[i + 1]);
        triangles.push(if left { [a, b, apex] } else { [b, a, apex] });
    }
    let mut hull: Vec<usize> = if left {
        order[..k].iter().copied().chain([apex]).collect()
    } else {
        [s0, apex]
            .into_iter()
            .chain(order[1..k].iter().rev().copied())
            .collect()
    };

    // Sweep: each new point is outside the current hull; fan it to every
    // hull edge that faces it.
    for &p in &order[k + 1..] {
        let m = hull.len();
        let visible: Vec<bool> = (0..m)
            .map(|i| orient(q[hull[i]], q[hull[(i + 1) % m]], q[p]) < -ORIENT_TOLERANCE)
            .collect();
        let Some(start) = (0..m).find(|&i| visible[i] && !visible[(i + m - 1) % m]) else {
            continue;
        };
        let mut end = start;
        while visible[end % m] && end < start + m {
            let (a, b) = (hull[end % m], hull[(end + 1) % m]);
            triangles.push([a, p, b]);
            end += 1;
        }
        // Hull vertices strictly between start and end disappear.
        let first = hull[start];
        let last = hull[end % m];
        let mut next = Vec::with_capacity(m + 1);
        let mut i = end % m;
        loop {
            next.push(hull[i]);
            if hull[i] == first {
                break;
            }
            i = (i + 1) % m;
        }
        next.push(p);
        debug_assert_eq!(next[0], last);
        hull = next;
    }

    lawson_flips(&q, &mut triangles);
    Ok(Triangulation {
        vertices: points.to_vec(),
        triangles,
    })
}

fn lawson_flips(q: &[Point], triangles: &mut [[usize; 3]]) {
    let mut edges: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 3);
    for (t, tri) in triangles.iter().enumerate() {
        for e in 0..3 {
            edges.insert((tri[e], tri[(e + 1) % 3]), t);
        }
    }
    let mut stack: Vec<(usize, usize)> = edges.keys().copied().filter(|(a, b)| a < b).collect();
    stack.sort_unstable();
    while let Some((a, b)) = stack.pop() {
        let (Some(&t1), Some(&t2)) = (edges.get(&(a, b)), edges.get(&(b, a))) else {
            continue;
        };
        let c = third(triangles[t1], a, b);
        let d = third(triangles[t2], b, a);
        if incircle(q[a], q[b], q[c], q[d]) <= INCIRCLE_TOLERANCE {
            continue;
        }
        // Replace diagonal a-b by c-d in the quad a, d, b, c.
        if orient(q[a], q[d], q[c]) <= ORIENT_TOLERANCE || orient(q[d], q[b], q[c]) <= ORIENT_TOLERANCE {
            continue;
        }
        for (x, y) in [(a, b), (b, c), (c, a), (b, a), (a, d), (d, b)] {
            edges.remove(&(x, y));
        }
        triangles[t1] = [a, d, c];
        triangles[t2] = [d, b, c];
        for (t, tri) in [(t1, triangles[t1]), (t2, triangles[t2])] {
            for e in 0..3 {
                edges.insert((tri[e], tri[(e + 1) % 3]), t);
            }
        }
        for (x, y) in [(a, d), (d, b), (b, c), (c, a)] {
            stack.push((x.min(y), x.max(y)));
        }
    }
}

fn third(tri: [usize; 3], a: usize, b: usize) -> usize {
    tri.into_iter()
        .find(|&v| v != a && v != b)
        .expect("triangle has three distinct vertices")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(raw: &[(f64, f64)]) -> Vec<Point> {
        raw.iter().map(|&(x, y)| Point::new(x, y)).collect()
    }

    #[test]
    fn single_triangle() {
        let t = delaunay(&pts(&[(0.0, 0.0), (4.0, 0.0), (1.0, 3.0)])).unwrap();
        assert_eq!(t.triangles.len(), 1);
        assert!(Triangulation::doubled_area(&t.vertices, t.triangles[0]) > 0.0);
    }

    #[test]
    fn unit_square_gives_two_triangles() {
        let t = delaunay(&pts(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)])).unwrap();
        assert_eq!(t.triangles.len(), 2);
        let area: f64 = t
            .triangles
            .iter()
            .map(|&tri| Triangulation::doubled_area(&t.vertices, tri))
            .sum();
        assert!((area - 2.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_and_tiny_inputs_error() {
        assert!(matches!(
            delaunay(&pts(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)])),
            Err(MorphError::Collinear)
        ));
        assert!(matches!(
            delaunay(&pts(&[(0.0, 0.0), (1.0, 1.0)])),
            Err(MorphError::TooFewPoints(2))
        ));
        assert!(matches!(delaunay(&pts(&[(1.0, 1.0); 5])), Err(MorphError::Collinear)));
    }

    #[test]
    fn duplicates_are_ignored_by_triangles() {
        let t = delaunay(&pts(&[(0.0, 0.0), (2.0, 0.0), (0.0, 2.0), (2.0, 0.0)])).unwrap();
        assert_eq!(t.triangles.len(), 1);
        assert!(t.triangles[0].iter().all(|&v| v != 3));
    }

    #[test]
    fn collinear_seed_run_is_fanned() {
        // Four points on y = 0 then an apex above them.
        let t = delaunay(&pts(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (1.5, 2.0)])).unwrap();
        assert_eq!(t.triangles.len(), 3);
        let area: f64 = t
            .triangles
            .iter()
            .map(|&tri| Triangulation::doubled_area(&t.vertices, tri))
            .sum();
        assert!((area - 6.0).abs() < 1e-12);
    }
}
