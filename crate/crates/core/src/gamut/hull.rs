//! Incremental 3D convex hull.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 3];

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: Point, b: Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

/// Hull facet: vertex indices into the input points, counter-clockwise seen
/// from outside, with the unit outward normal and offset (`n·x ≤ offset`
/// inside).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    pub vertices: [usize; 3],
    pub normal: Point,
    pub offset: f64,
}

impl Facet {
    fn new(points: &[Point], v: [usize; 3]) -> Option<Facet> {
        let n = cross(sub(points[v[1]], points[v[0]]), sub(points[v[2]], points[v[0]]));
        let len = norm(n);
        if len == 0.0 {
            return None;
        }
        let normal = [n[0] / len, n[1] / len, n[2] / len];
        Some(Facet {
            vertices: v,
            normal,
            offset: dot(normal, points[v[0]]),
        })
    }

    pub fn signed_distance(&self, p: Point) -> f64 {
        dot(self.normal, p) - self.offset
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hull {
    pub facets: Vec<Facet>,
    /// Distance tolerance used during construction.
    pub eps: f64,
}

impl Hull {
    /// Builds the hull of `points`. Fails when fewer than four of them are
    /// affinely independent.
    pub fn build(points: &[Point]) -> Result<Hull> {
        if points.len() < 4 {
            return Err(Error::DegenerateGamut(format!(
                "{} points cannot span a volume",
                points.len()
            )));
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let scale = norm(sub(hi, lo)).max(f64::MIN_POSITIVE);
        let eps = 1e-10 * scale;

        let i0 = (0..points.len())
            .min_by(|&a, &b| points[a][0].total_cmp(&points[b][0]))
            .unwrap();
        let i1 = farthest(points, |p| norm(sub(p, points[i0])));
        if norm(sub(points[i1], points[i0])) <= eps {
            return Err(Error::DegenerateGamut("all points coincide".into()));
        }
        let axis = sub(points[i1], points[i0]);
        let i2 = farthest(points, |p| norm(cross(axis, sub(p, points[i0]))) / norm(axis));
        let n = cross(axis, sub(points[i2], points[i0]));
        if norm(n) / norm(axis) <= eps {
            return Err(Error::DegenerateGamut("points are collinear".into()));
        }
        let i3 = farthest(points, |p| (dot(n, sub(p, points[i0])) / norm(n)).abs());
        if (dot(n, sub(points[i3], points[i0])) / norm(n)).abs() <= eps {
            return Err(Error::DegenerateGamut("points are coplanar".into()));
        }

        let seed = [i0, i1, i2, i3];
        let centroid = seed.iter().fold([0.0; 3], |acc, &i| {
            [acc[0] + points[i][0] / 4.0, acc[1] + points[i][1] / 4.0, acc[2] + points[i][2] / 4.0]
        });
        let mut facets = Vec::new();
        for skip in 0..4 {
            let mut tri: Vec<usize> = seed.iter().enumerate().filter(|(k, _)| *k != skip).map(|(_, &i)| i).collect();
            let mut f = Facet::new(points, [tri[0], tri[1], tri[2]]).expect("non-degenerate seed");
            if f.signed_distance(centroid) > 0.0 {
                tri.swap(1, 2);
                f = Facet::new(points, [tri[0], tri[1], tri[2]]).unwrap();
            }
            facets.push(f);
        }

        for (pi, &p) in points.iter().enumerate() {
            if seed.contains(&pi) {
                continue;
            }
            let visible: Vec<bool> = facets.iter().map(|f| f.signed_distance(p) > eps).collect();
            if !visible.iter().any(|v| *v) {
                continue;
            }
            let mut edges = HashSet::new();
            for (f, _) in facets.iter().zip(&visible).filter(|(_, v)| **v) {
                let v = f.vertices;
                for e in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])] {
                    edges.insert(e);
                }
            }
            let horizon: Vec<(usize, usize)> = facets
                .iter()
                .zip(&visible)
                .filter(|(_, v)| **v)
                .flat_map(|(f, _)| {
                    let v = f.vertices;
                    [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])]
                })
                .filter(|&(a, b)| !edges.contains(&(b, a)))
                .collect();
            let mut next: Vec<Facet> = facets
                .into_iter()
                .zip(&visible)
                .filter(|(_, v)| !**v)
                .map(|(f, _)| f)
                .collect();
            for (a, b) in horizon {
                if let Some(f) = Facet::new(points, [a, b, pi]) {
                    next.push(f);
                }
            }
            facets = next;
        }
        Ok(Hull { facets, eps })
    }

    /// Sorted indices of the points that are hull vertices.
    pub fn vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.facets.iter().flat_map(|f| f.vertices).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Largest signed distance of `p` to any facet plane; `≤ 0` inside.
    pub fn max_violation(&self, p: Point) -> f64 {
        self.facets
            .iter()
            .map(|f| f.signed_distance(p))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        self.max_violation(p) <= tol
    }

    /// Whether `p` lies on the boundary: inside every plane within `tol` and on
    /// at least one facet triangle.
    pub fn on_surface(&self, points: &[Point], p: Point, tol: f64) -> bool {
        if !self.contains(p, tol) {
            return false;
        }
        self.facets.iter().any(|f| {
            f.signed_distance(p).abs() <= tol && {
                let b = triangle_barycentric(points[f.vertices[0]], points[f.vertices[1]], points[f.vertices[2]], p);
                b.iter().all(|&x| x >= -1e-7)
            }
        })
    }

    pub fn volume(&self, points: &[Point]) -> f64 {
        let o = points[self.facets[0].vertices[0]];
        self.facets
            .iter()
            .map(|f| {
                let [a, b, c] = f.vertices.map(|i| sub(points[i], o));
                dot(a, cross(b, c)) / 6.0
            })
            .sum()
    }
}

fn farthest(points: &[Point], mut key: impl FnMut(Point) -> f64) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &p) in points.iter().enumerate() {
        let v = key(p);
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

/// Barycentric coordinates of the projection of `p` onto triangle `abc`'s plane.
pub fn triangle_barycentric(a: Point, b: Point, c: Point, p: Point) -> [f64; 3] {
    let v0 = sub(b, a);
    let v1 = sub(c, a);
    let v2 = sub(p, a);
    let d00 = dot(v0, v0);
    let d01 = dot(v0, v1);
    let d11 = dot(v1, v1);
    let d20 = dot(v2, v0);
    let d21 = dot(v2, v1);
    let den = d00 * d11 - d01 * d01;
    let v = (d11 * d20 - d01 * d21) / den;
    let w = (d00 * d21 - d01 * d20) / den;
    [1.0 - v - w, v, w]
}

/// Barycentric coordinates of `p` in tetrahedron `abcd`, or `None` when the
/// tetrahedron is flat.
pub fn tetra_barycentric(t: [Point; 4], p: Point) -> Option<[f64; 4]> {
    let e1 = sub(t[1], t[0]);
    let e2 = sub(t[2], t[0]);
    let e3 = sub(t[3], t[0]);
    let det = dot(e1, cross(e2, e3));
    let scale = norm(e1) * norm(e2) * norm(e3);
    if scale == 0.0 || det.abs() <= 1e-12 * scale {
        return None;
    }
    let r = sub(p, t[0]);
    let b1 = dot(r, cross(e2, e3)) / det;
    let b2 = dot(e1, cross(r, e3)) / det;
    let b3 = dot(e1, cross(e2, r)) / det;
    Some([1.0 - b1 - b2 - b3, b1, b2, b3])
}

/// Möller-Trumbore ray/triangle test; returns `(t, u, v)` with the hit at
/// `origin + t·dir` and barycentric `(1-u-v, u, v)`.
pub fn ray_triangle(origin: Point, dir: Point, a: Point, b: Point, c: Point) -> Option<(f64, f64, f64)> {
    let e1 = sub(b, a);
    let e2 = sub(c, a);
    let pv = cross(dir, e2);
    let det = dot(e1, pv);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let tv = sub(origin, a);
    let u = dot(tv, pv) * inv;
    const SLACK: f64 = 1e-9;
    if !(-SLACK..=1.0 + SLACK).contains(&u) {
        return None;
    }
    let qv = cross(tv, e1);
    let v = dot(dir, qv) * inv;
    if v < -SLACK || u + v > 1.0 + SLACK {
        return None;
    }
    let t = dot(e2, qv) * inv;
    Some((t, u, v))
}
