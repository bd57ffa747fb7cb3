//! The cell polygon: the union of active cells with each loose corner
//! clipped away, and Euclidean shortest paths inside it.
//!
//! A loose corner pinches the union into a single point, so a small
//! triangle is removed at every active cell incident to it. The clip is a
//! fixed fraction of the cell side and is checked against the graph
//! contour (edges and triangles) when an instance is supplied: the clip
//! must remove no point of the contour.
//!
//! Shortest paths are computed on the visibility graph over the polygon's
//! corner vertices, which is exact for polygonal regions: geodesics only
//! turn at vertices.

use std::collections::BTreeSet;

use thiserror::Error;

use super::cellgraph::is_loose;
use super::oracle::dijkstra;
use crate::geometry::{CellCoord, Point, UdgInstance, CELL_SIDE};

/// Side length of the corner clip at a loose corner.
pub fn notch_eps() -> f64 {
    CELL_SIDE / 100.0
}

/// Active-cell cap for geodesic queries; the visibility graph is
/// quadratic in the corner count.
pub const GEODESIC_CELL_CAP: usize = 200;

#[derive(Debug, Error, PartialEq)]
pub enum PolygonError {
    #[error("point ({x}, {y}) lies outside the cell polygon")]
    PointOutsidePolygon { x: f64, y: f64 },
    #[error("no path between the query points inside the cell polygon")]
    NoPath,
    #[error("corner clip at ({i}, {j}) intersects the graph contour")]
    NotchBlocked { i: i64, j: i64 },
    #[error("geodesic oracle capped at {cap} active cells, got {actual}")]
    TooManyCells { cap: usize, actual: usize },
}

/// Triangle removed at a loose corner: apex `v`, cut endpoints `a`, `b`
/// on the two cell sides meeting at `v`.
#[derive(Clone, Copy, Debug)]
struct Notch {
    v: Point,
    a: Point,
    b: Point,
}

pub struct CellPolygon {
    active: BTreeSet<CellCoord>,
    notches: Vec<Notch>,
    verts: Vec<Point>,
    vis: Vec<Vec<(usize, f64)>>,
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Signed point-line distance scale; positive on the left of `a -> b`.
fn side_of(a: Point, b: Point, p: Point) -> f64 {
    cross(a, b, p) / a.dist(&b)
}

fn point_on(p: Point, q: Point, t: f64) -> Point {
    Point::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
}

fn seg_seg_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: Point, b: Point, c: Point, d: f64| {
        d == 0.0
            && c.x >= a.x.min(b.x) - 1e-12
            && c.x <= a.x.max(b.x) + 1e-12
            && c.y >= a.y.min(b.y) - 1e-12
            && c.y <= a.y.max(b.y) + 1e-12
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

fn point_in_triangle(p: Point, t: &[Point; 3]) -> bool {
    let d1 = cross(t[0], t[1], p);
    let d2 = cross(t[1], t[2], p);
    let d3 = cross(t[2], t[0], p);
    let has_neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    let has_pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    !(has_neg && has_pos)
}

fn triangles_intersect(a: &[Point; 3], b: &[Point; 3]) -> bool {
    for i in 0..3 {
        for j in 0..3 {
            if seg_seg_intersect(a[i], a[(i + 1) % 3], b[j], b[(j + 1) % 3]) {
                return true;
            }
        }
    }
    a.iter().any(|&p| point_in_triangle(p, b)) || b.iter().any(|&p| point_in_triangle(p, a))
}

impl CellPolygon {
    /// Builds the polygon for the active cells, clipping loose corners.
    /// With an instance supplied, every clip is verified disjoint from
    /// the instance's edges and triangles.
    pub fn new(
        active: &BTreeSet<CellCoord>,
        guard: Option<&UdgInstance>,
    ) -> Result<Self, PolygonError> {
        if active.len() > GEODESIC_CELL_CAP {
            return Err(PolygonError::TooManyCells {
                cap: GEODESIC_CELL_CAP,
                actual: active.len(),
            });
        }
        let mut present: BTreeSet<(i64, i64)> = BTreeSet::new();
        for cell in active {
            for c in [
                (cell.i, cell.j),
                (cell.i + 1, cell.j),
                (cell.i, cell.j + 1),
                (cell.i + 1, cell.j + 1),
            ] {
                present.insert(c);
            }
        }
        let eps = notch_eps();
        let mut notches = Vec::new();
        let mut verts = Vec::new();
        for &(ci, cj) in &present {
            let v = Point::new(ci as f64 * CELL_SIDE, cj as f64 * CELL_SIDE);
            if !is_loose(active, (ci, cj)) {
                verts.push(v);
                continue;
            }
            // One clip per incident active cell; the legs point into it.
            for (di, dj) in [(-1i64, -1i64), (0, -1), (-1, 0), (0, 0)] {
                if !active.contains(&CellCoord::new(ci + di, cj + dj)) {
                    continue;
                }
                let sx = if di == 0 { 1.0 } else { -1.0 };
                let sy = if dj == 0 { 1.0 } else { -1.0 };
                let a = Point::new(v.x + sx * eps, v.y);
                let b = Point::new(v.x, v.y + sy * eps);
                if let Some(inst) = guard {
                    let tri = [v, a, b];
                    for &(u, w) in inst.edges() {
                        let (p1, p2) = (inst.pt(u), inst.pt(w));
                        if seg_seg_intersect(p1, p2, tri[0], tri[1])
                            || seg_seg_intersect(p1, p2, tri[1], tri[2])
                            || seg_seg_intersect(p1, p2, tri[2], tri[0])
                            || point_in_triangle(p1, &tri)
                            || point_in_triangle(p2, &tri)
                        {
                            return Err(PolygonError::NotchBlocked { i: ci, j: cj });
                        }
                    }
                    for t in inst.triangles() {
                        let tt = [inst.pt(t[0]), inst.pt(t[1]), inst.pt(t[2])];
                        if triangles_intersect(&tri, &tt) {
                            return Err(PolygonError::NotchBlocked { i: ci, j: cj });
                        }
                    }
                }
                verts.push(a);
                verts.push(b);
                notches.push(Notch { v, a, b });
            }
        }
        let mut poly = CellPolygon {
            active: active.clone(),
            notches,
            verts,
            vis: Vec::new(),
        };
        let n = poly.verts.len();
        let mut vis = vec![Vec::new(); n];
        for i in 0..n {
            for j in i + 1..n {
                if poly.segment_inside(poly.verts[i], poly.verts[j]) {
                    let d = poly.verts[i].dist(&poly.verts[j]);
                    vis[i].push((j, d));
                    vis[j].push((i, d));
                }
            }
        }
        poly.vis = vis;
        Ok(poly)
    }

    /// Whether `p` lies in the polygon (boundary included).
    pub fn contains(&self, p: Point) -> bool {
        if !self.in_cells(p) {
            return false;
        }
        for n in &self.notches {
            if self.strictly_in_notch(p, n) {
                return false;
            }
        }
        true
    }

    fn in_cells(&self, p: Point) -> bool {
        let tol = 1e-9;
        let i0 = ((p.x - tol) / CELL_SIDE).floor() as i64;
        let i1 = ((p.x + tol) / CELL_SIDE).floor() as i64;
        let j0 = ((p.y - tol) / CELL_SIDE).floor() as i64;
        let j1 = ((p.y + tol) / CELL_SIDE).floor() as i64;
        for i in i0..=i1 {
            for j in j0..=j1 {
                if self.active.contains(&CellCoord::new(i, j)) {
                    return true;
                }
            }
        }
        false
    }

    fn strictly_in_notch(&self, p: Point, n: &Notch) -> bool {
        let tol = 1e-12;
        let orient = cross(n.v, n.a, n.b);
        let (a, b) = if orient > 0.0 { (n.a, n.b) } else { (n.b, n.a) };
        side_of(n.v, a, p) > tol && side_of(a, b, p) > tol && side_of(b, n.v, p) > tol
    }

    /// Whether the whole segment `p q` lies in the polygon. Contact with
    /// a clipped corner is allowed only along the cut edge itself.
    pub fn segment_inside(&self, p: Point, q: Point) -> bool {
        if !self.contains(p) || !self.contains(q) {
            return false;
        }
        // Split at every gridline crossing and test a representative
        // point of each piece against the closed cell union.
        let mut ts = vec![0.0f64, 1.0];
        let (dx, dy) = (q.x - p.x, q.y - p.y);
        if dx.abs() > 1e-15 {
            let k0 = (p.x.min(q.x) / CELL_SIDE).floor() as i64;
            let k1 = (p.x.max(q.x) / CELL_SIDE).ceil() as i64;
            for k in k0..=k1 {
                let t = (k as f64 * CELL_SIDE - p.x) / dx;
                if t > 0.0 && t < 1.0 {
                    ts.push(t);
                }
            }
        }
        if dy.abs() > 1e-15 {
            let k0 = (p.y.min(q.y) / CELL_SIDE).floor() as i64;
            let k1 = (p.y.max(q.y) / CELL_SIDE).ceil() as i64;
            for k in k0..=k1 {
                let t = (k as f64 * CELL_SIDE - p.y) / dy;
                if t > 0.0 && t < 1.0 {
                    ts.push(t);
                }
            }
        }
        ts.sort_by(f64::total_cmp);
        ts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        for w in ts.windows(2) {
            if w[1] - w[0] < 1e-12 {
                continue;
            }
            let m = point_on(p, q, 0.5 * (w[0] + w[1]));
            if !self.in_cells(m) {
                return false;
            }
        }
        // A piece may touch a clipped corner: clip the segment against
        // each notch triangle and allow only slivers on the cut edge.
        for n in &self.notches {
            if !self.segment_clears_notch(p, q, n) {
                return false;
            }
        }
        true
    }

    fn segment_clears_notch(&self, p: Point, q: Point, n: &Notch) -> bool {
        let orient = cross(n.v, n.a, n.b);
        let (a, b) = if orient > 0.0 { (n.a, n.b) } else { (n.b, n.a) };
        let edges = [(n.v, a), (a, b), (b, n.v)];
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        for (e0, e1) in edges {
            // Inside is the left of each directed edge.
            let s_p = cross(e0, e1, p);
            let s_q = cross(e0, e1, q);
            let ds = s_q - s_p;
            if ds.abs() < 1e-15 {
                if s_p < 0.0 {
                    return true;
                }
                continue;
            }
            let t = -s_p / ds;
            if ds > 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
            if t0 >= t1 {
                return true;
            }
        }
        if t1 - t0 < 1e-12 {
            return true;
        }
        let c0 = point_on(p, q, t0);
        let c1 = point_on(p, q, t1);
        let cut_tol = 1e-9;
        side_of(n.a, n.b, c0).abs() < cut_tol && side_of(n.a, n.b, c1).abs() < cut_tol
    }

    /// Euclidean shortest-path length from `p` to `q` inside the polygon.
    pub fn geodesic(&self, p: Point, q: Point) -> Result<f64, PolygonError> {
        for pt in [p, q] {
            if !self.contains(pt) {
                return Err(PolygonError::PointOutsidePolygon { x: pt.x, y: pt.y });
            }
        }
        if p.dist(&q) < 1e-12 {
            return Ok(0.0);
        }
        if self.segment_inside(p, q) {
            return Ok(p.dist(&q));
        }
        let n = self.verts.len();
        let mut adj: Vec<Vec<(usize, f64)>> = self.vis.clone();
        adj.push(Vec::new());
        adj.push(Vec::new());
        let (pi, qi) = (n, n + 1);
        for (i, &v) in self.verts.iter().enumerate() {
            if self.segment_inside(p, v) {
                let d = p.dist(&v);
                adj[pi].push((i, d));
                adj[i].push((pi, d));
            }
            if self.segment_inside(q, v) {
                let d = q.dist(&v);
                adj[qi].push((i, d));
                adj[i].push((qi, d));
            }
        }
        dijkstra(&adj, pi)[qi].ok_or(PolygonError::NoPath)
    }
}
