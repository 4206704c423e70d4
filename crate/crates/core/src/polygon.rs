//! Simple polygons and the segment predicates the simulator and the
//! collision checker are built on.

use crate::geom::{Point2, Pose2};
use serde::{Deserialize, Serialize};

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point2,
    pub max: Point2,
}

impl Aabb {
    pub fn new(min: Point2, max: Point2) -> Self {
        Self { min, max }
    }

    pub fn from_points<'a>(pts: impl IntoIterator<Item = &'a Point2>) -> Self {
        let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in pts {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        Self { min, max }
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn overlaps(&self, other: &Aabb) -> bool {
        self.min.x <= other.max.x
            && other.min.x <= self.max.x
            && self.min.y <= other.max.y
            && other.min.y <= self.max.y
    }
}

/// A simple polygon given by its vertex ring (not closed explicitly).
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point2>,
    bbox: Aabb,
}

impl Polygon {
    /// Builds a polygon without validating simplicity; see [`Polygon::is_simple`].
    pub fn new(vertices: Vec<Point2>) -> Self {
        let bbox = Aabb::from_points(&vertices);
        Self { vertices, bbox }
    }

    /// Rectangle of `length` along the heading and `width` across, centered
    /// at `center`.
    pub fn rectangle(center: Pose2, length: f64, width: f64) -> Self {
        let (hl, hw) = (0.5 * length, 0.5 * width);
        let local = [
            Point2::new(hl, hw),
            Point2::new(-hl, hw),
            Point2::new(-hl, -hw),
            Point2::new(hl, -hw),
        ];
        Self::new(local.iter().map(|p| center.apply(*p)).collect())
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn bbox(&self) -> &Aabb {
        &self.bbox
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// True when no two non-adjacent edges touch and no two adjacent edges overlap.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        let edges: Vec<_> = self.edges().collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let (a, b) = edges[i];
                let (c, d) = edges[j];
                if adjacent {
                    // shared vertex only; collinear overlap is a degeneracy
                    let shared = if j == i + 1 { b } else { a };
                    let (p, q) = if j == i + 1 { (a, d) } else { (b, c) };
                    if orient(p, shared, q) == 0.0 && dot_sub(p, shared, q) > 0.0 {
                        return false;
                    }
                } else if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        signed_area(&self.vertices).abs() > 0.0
    }

    /// Even-odd containment test; boundary points count as inside.
    pub fn contains(&self, p: Point2) -> bool {
        if !self.bbox.contains(p) {
            return false;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if point_on_segment(p, a, b) {
                return true;
            }
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Exact intersection test between two closed polygons.
    pub fn intersects(&self, other: &Polygon) -> bool {
        if !self.bbox.overlaps(&other.bbox) {
            return false;
        }
        for (a, b) in self.edges() {
            for (c, d) in other.edges() {
                if segments_intersect(a, b, c, d) {
                    return true;
                }
            }
        }
        // no boundary crossing: either disjoint or one inside the other
        other.contains(self.vertices[0]) || self.contains(other.vertices[0])
    }
}

pub(crate) fn signed_area(v: &[Point2]) -> f64 {
    let n = v.len();
    (0..n)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        * 0.5
}

/// Cross product of `(b - a) x (c - a)`.
#[inline]
pub(crate) fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

#[inline]
fn dot_sub(p: Point2, o: Point2, q: Point2) -> f64 {
    (p.x - o.x) * (q.x - o.x) + (p.y - o.y) * (q.y - o.y)
}

#[inline]
fn point_on_segment(p: Point2, a: Point2, b: Point2) -> bool {
    orient(a, b, p) == 0.0
        && p.x >= a.x.min(b.x)
        && p.x <= a.x.max(b.x)
        && p.y >= a.y.min(b.y)
        && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection, touching included.
pub fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && point_on_segment(a, c, d))
        || (d2 == 0.0 && point_on_segment(b, c, d))
        || (d3 == 0.0 && point_on_segment(c, a, b))
        || (d4 == 0.0 && point_on_segment(d, a, b))
}

/// Distance along the ray `origin + t * dir` (unit `dir`) to segment `a-b`.
pub fn ray_segment(origin: Point2, dir: (f64, f64), a: Point2, b: Point2) -> Option<f64> {
    let ex = b.x - a.x;
    let ey = b.y - a.y;
    let denom = dir.0 * ey - dir.1 * ex;
    if denom == 0.0 {
        return None;
    }
    let wx = a.x - origin.x;
    let wy = a.y - origin.y;
    let t = (wx * ey - wy * ex) / denom;
    let u = (wx * dir.1 - wy * dir.0) / denom;
    if t >= 0.0 && (0.0..=1.0).contains(&u) {
        Some(t)
    } else {
        None
    }
}

/// Euclidean distance from `p` to the closed segment `a-b`.
pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ex = b.x - a.x;
    let ey = b.y - a.y;
    let len2 = ex * ex + ey * ey;
    let t = if len2 > 0.0 {
        (((p.x - a.x) * ex + (p.y - a.y) * ey) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p.x - (a.x + t * ex)).hypot(p.y - (a.y + t * ey))
}
