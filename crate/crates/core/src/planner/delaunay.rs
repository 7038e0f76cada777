//! Bowyer-Watson Delaunay triangulation over 2D points.
//!
//! Plain f64 predicates are fine here: the input are cone positions with
//! decimeter-scale spacing, far away from the degeneracies that require
//! exact arithmetic.

use alloc::vec::Vec;

use crate::geometry::Point2;

#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    /// Input points (super-triangle vertices removed).
    pub points: Vec<Point2>,
    /// Triangles as index triples into `points`.
    pub triangles: Vec<[usize; 3]>,
}

impl Triangulation {
    /// Unique undirected edges of the triangulation.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut set = alloc::collections::BTreeSet::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                set.insert((a.min(b), a.max(b)));
            }
        }
        set.into_iter().collect()
    }
}

/// Triangulates a point set. Fewer than 3 points, or a fully collinear
/// set, yields an empty triangle list.
pub fn triangulate(points: &[Point2]) -> Triangulation {
    let n = points.len();
    if n < 3 {
        return Triangulation {
            points: points.to_vec(),
            triangles: Vec::new(),
        };
    }

    // super triangle comfortably containing everything
    let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    }
    let span = (max.x - min.x).max(max.y - min.y).max(1.0);
    let cx = (min.x + max.x) / 2.0;
    let cy = (min.y + max.y) / 2.0;
    let mut verts: Vec<Point2> = points.to_vec();
    verts.push(Point2::new(cx - 20.0 * span, cy - 10.0 * span));
    verts.push(Point2::new(cx + 20.0 * span, cy - 10.0 * span));
    verts.push(Point2::new(cx, cy + 20.0 * span));
    let (s0, s1, s2) = (n, n + 1, n + 2);

    let mut triangles: Vec<[usize; 3]> = alloc::vec![[s0, s1, s2]];

    for i in 0..n {
        let p = verts[i];
        // triangles whose circumcircle contains p
        let mut bad: Vec<usize> = Vec::new();
        for (ti, t) in triangles.iter().enumerate() {
            if in_circumcircle(&verts[t[0]], &verts[t[1]], &verts[t[2]], &p) {
                bad.push(ti);
            }
        }
        // boundary of the bad region: edges appearing exactly once
        let mut boundary: Vec<(usize, usize)> = Vec::new();
        for &ti in &bad {
            let t = triangles[ti];
            'edges: for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                for &tj in &bad {
                    if tj == ti {
                        continue;
                    }
                    let u = triangles[tj];
                    if has_edge(&u, b, a) || has_edge(&u, a, b) {
                        continue 'edges;
                    }
                }
                boundary.push((a, b));
            }
        }
        for &ti in bad.iter().rev() {
            triangles.swap_remove(ti);
        }
        for (a, b) in boundary {
            if orient(&verts[a], &verts[b], &p).abs() > 1e-12 {
                triangles.push([a, b, i]);
            }
        }
    }

    triangles.retain(|t| t.iter().all(|&v| v < n));
    Triangulation {
        points: points.to_vec(),
        triangles,
    }
}

fn has_edge(t: &[usize; 3], a: usize, b: usize) -> bool {
    for (x, y) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
        if (x == a && y == b) || (x == b && y == a) {
            return true;
        }
    }
    false
}

fn orient(a: &Point2, b: &Point2, c: &Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Whether `p` lies strictly inside the circumcircle of `(a, b, c)`.
fn in_circumcircle(a: &Point2, b: &Point2, c: &Point2, p: &Point2) -> bool {
    let (ax, ay) = (a.x - p.x, a.y - p.y);
    let (bx, by) = (b.x - p.x, b.y - p.y);
    let (cx, cy) = (c.x - p.x, c.y - p.y);
    let det = (ax * ax + ay * ay) * (bx * cy - cx * by)
        - (bx * bx + by * by) * (ax * cy - cx * ay)
        + (cx * cx + cy * cy) * (ax * by - bx * ay);
    if orient(a, b, c) > 0.0 {
        det > 0.0
    } else {
        det < 0.0
    }
}
