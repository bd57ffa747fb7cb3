//! Planar geometry for unit-disk graphs over a fixed square grid.
//!
//! The contour of a unit-disk graph is the union of its edge segments and
//! filled triangles. A grid cell is *active* when it intersects that contour;
//! active cells induce the grid graph used by the upper layers. All
//! containment and intersection predicates are closed (boundaries count) with
//! tolerance [`EPS`].

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Node identifier. Instance files may use any distinct values.
pub type NodeId = u64;

/// Side length of a grid cell: sqrt(15)/10.
pub const CELL_SIDE: f64 = 0.387_298_334_620_741_7;

/// Geometric tolerance for closed predicates.
pub const EPS: f64 = 1e-9;

/// Upper bound on the number of cells any single node can represent.
///
/// Candidates of a grid point lie within 1 + CELL_SIDE/sqrt(2) of it, so the
/// cells a node may represent span at most 8 cells per axis (see
/// `packing_cells_per_axis`), 64 in total.
pub const MAX_CELLS_PER_NODE: u64 = 64;

/// Cells per axis that can hold grid points represented by one node:
/// ceil(2 * (1 + c/sqrt(2)) / c) + 1.
pub fn packing_cells_per_axis() -> u64 {
    let reach = 1.0 + CELL_SIDE / 2f64.sqrt();
    (2.0 * reach / CELL_SIDE).ceil() as u64 + 1
}

/// A point in the plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist2(&self, o: &Point) -> f64 {
        let dx = self.x - o.x;
        let dy = self.y - o.y;
        dx * dx + dy * dy
    }

    pub fn dist(&self, o: &Point) -> f64 {
        self.dist2(o).sqrt()
    }
}

fn cross(ox: f64, oy: f64, ax: f64, ay: f64) -> f64 {
    ox * ay - oy * ax
}

/// Integer coordinates of a grid cell; the cell covers
/// `[i*CELL_SIDE, (i+1)*CELL_SIDE) x [j*CELL_SIDE, (j+1)*CELL_SIDE)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellCoord {
    pub i: i64,
    pub j: i64,
}

impl CellCoord {
    pub fn new(i: i64, j: i64) -> Self {
        CellCoord { i, j }
    }

    /// Center of the cell; this is the grid point associated with it.
    pub fn center(&self) -> Point {
        Point::new(
            (self.i as f64 + 0.5) * CELL_SIDE,
            (self.j as f64 + 0.5) * CELL_SIDE,
        )
    }

    /// Closed bounding box `(x0, y0, x1, y1)` of the cell.
    pub fn rect(&self) -> (f64, f64, f64, f64) {
        (
            self.i as f64 * CELL_SIDE,
            self.j as f64 * CELL_SIDE,
            (self.i + 1) as f64 * CELL_SIDE,
            (self.j + 1) as f64 * CELL_SIDE,
        )
    }

    pub fn offset(&self, di: i64, dj: i64) -> CellCoord {
        CellCoord::new(self.i + di, self.j + dj)
    }
}

/// Cell containing a point (half-open cells).
pub fn cell_of(p: Point) -> CellCoord {
    CellCoord::new(
        (p.x / CELL_SIDE).floor() as i64,
        (p.y / CELL_SIDE).floor() as i64,
    )
}

/// Distance from point `p` to segment `ab`.
pub fn point_segment_dist(p: Point, a: Point, b: Point) -> f64 {
    let abx = b.x - a.x;
    let aby = b.y - a.y;
    let len2 = abx * abx + aby * aby;
    if len2 <= f64::MIN_POSITIVE {
        return p.dist(&a);
    }
    let t = ((p.x - a.x) * abx + (p.y - a.y) * aby) / len2;
    let t = t.clamp(0.0, 1.0);
    p.dist(&Point::new(a.x + t * abx, a.y + t * aby))
}

fn segments_properly_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(b.x - a.x, b.y - a.y, c.x - a.x, c.y - a.y);
    let d2 = cross(b.x - a.x, b.y - a.y, d.x - a.x, d.y - a.y);
    let d3 = cross(d.x - c.x, d.y - c.y, a.x - c.x, a.y - c.y);
    let d4 = cross(d.x - c.x, d.y - c.y, b.x - c.x, b.y - c.y);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Distance between segments `ab` and `cd` (0 when they cross).
pub fn segment_segment_dist(a: Point, b: Point, c: Point, d: Point) -> f64 {
    if segments_properly_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_dist(a, c, d)
        .min(point_segment_dist(b, c, d))
        .min(point_segment_dist(c, a, b))
        .min(point_segment_dist(d, a, b))
}

/// Whether segment `ab` intersects the closed cell (within [`EPS`]).
pub fn segment_intersects_cell(a: Point, b: Point, cell: CellCoord) -> bool {
    let (x0, y0, x1, y1) = cell.rect();
    let inside = |p: Point| {
        p.x >= x0 - EPS && p.x <= x1 + EPS && p.y >= y0 - EPS && p.y <= y1 + EPS
    };
    if inside(a) || inside(b) {
        return true;
    }
    let c00 = Point::new(x0, y0);
    let c10 = Point::new(x1, y0);
    let c11 = Point::new(x1, y1);
    let c01 = Point::new(x0, y1);
    let sides = [(c00, c10), (c10, c11), (c11, c01), (c01, c00)];
    sides
        .iter()
        .any(|&(p, q)| segment_segment_dist(a, b, p, q) <= EPS)
}

/// All cells intersected by segment `ab`.
pub fn segment_cells(a: Point, b: Point) -> Vec<CellCoord> {
    let lo_i = ((a.x.min(b.x) - EPS) / CELL_SIDE).floor() as i64;
    let hi_i = ((a.x.max(b.x) + EPS) / CELL_SIDE).floor() as i64;
    let lo_j = ((a.y.min(b.y) - EPS) / CELL_SIDE).floor() as i64;
    let hi_j = ((a.y.max(b.y) + EPS) / CELL_SIDE).floor() as i64;
    let mut out = Vec::new();
    for i in lo_i..=hi_i {
        for j in lo_j..=hi_j {
            let cell = CellCoord::new(i, j);
            if segment_intersects_cell(a, b, cell) {
                out.push(cell);
            }
        }
    }
    out
}

/// Whether `p` lies in the closed triangle `abc` (within [`EPS`]).
pub fn point_in_triangle(p: Point, a: Point, b: Point, c: Point) -> bool {
    let orient = cross(b.x - a.x, b.y - a.y, c.x - a.x, c.y - a.y);
    if orient.abs() <= f64::MIN_POSITIVE {
        // Degenerate triangle: containment means lying on a side.
        return point_segment_dist(p, a, b) <= EPS
            || point_segment_dist(p, b, c) <= EPS
            || point_segment_dist(p, a, c) <= EPS;
    }
    let s = orient.signum();
    let d1 = s * cross(b.x - a.x, b.y - a.y, p.x - a.x, p.y - a.y);
    let d2 = s * cross(c.x - b.x, c.y - b.y, p.x - b.x, p.y - b.y);
    let d3 = s * cross(a.x - c.x, a.y - c.y, p.x - c.x, p.y - c.y);
    if d1 >= 0.0 && d2 >= 0.0 && d3 >= 0.0 {
        return true;
    }
    point_segment_dist(p, a, b) <= EPS
        || point_segment_dist(p, b, c) <= EPS
        || point_segment_dist(p, a, c) <= EPS
}

fn triangle_intersects_cell(a: Point, b: Point, c: Point, cell: CellCoord) -> bool {
    if segment_intersects_cell(a, b, cell)
        || segment_intersects_cell(b, c, cell)
        || segment_intersects_cell(a, c, cell)
    {
        return true;
    }
    // Sides clear of the cell: overlap remains possible only if the cell sits
    // fully inside the triangle.
    let (x0, y0, x1, y1) = cell.rect();
    point_in_triangle(Point::new(x0, y0), a, b, c)
        && point_in_triangle(Point::new(x1, y1), a, b, c)
}

/// Errors from instance construction.
#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("duplicate node id {0}")]
    DuplicateId(NodeId),
    #[error("coincident points for ids {0} and {1}")]
    CoincidentPoints(NodeId, NodeId),
}

/// A unit-disk graph: nodes with positions, edges between pairs at distance
/// at most 1 (closed predicate).
#[derive(Clone, Debug)]
pub struct UdgInstance {
    ids: Vec<NodeId>,
    pts: Vec<Point>,
    index: BTreeMap<NodeId, usize>,
    adj: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
    connected: bool,
}

impl UdgInstance {
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn id(&self, idx: usize) -> NodeId {
        self.ids[idx]
    }

    pub fn pt(&self, idx: usize) -> Point {
        self.pts[idx]
    }

    pub fn idx_of(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Neighbor indices of node `idx`, ascending.
    pub fn adj(&self, idx: usize) -> &[usize] {
        &self.adj[idx]
    }

    /// Edge list as index pairs `(u, v)` with `u < v`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn is_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }

    /// Whether the graph is connected. Callers decide how to treat
    /// disconnected instances.
    pub fn is_connected(&self) -> bool {
        self.connected
    }

    /// All triangles as index triples `[u, v, w]` with `u < v < w`.
    pub fn triangles(&self) -> Vec<[usize; 3]> {
        let mut out = Vec::new();
        for &(u, v) in &self.edges {
            // Common neighbors above v keep each triangle unique.
            let (au, av) = (&self.adj[u], &self.adj[v]);
            let (mut i, mut j) = (0, 0);
            while i < au.len() && j < av.len() {
                match au[i].cmp(&av[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        if au[i] > v {
                            out.push([u, v, au[i]]);
                        }
                        i += 1;
                        j += 1;
                    }
                }
            }
        }
        out
    }
}

/// Builds the unit-disk graph over the given nodes.
pub fn build_udg(nodes: &[(NodeId, Point)]) -> Result<UdgInstance, GeometryError> {
    let mut sorted: Vec<(NodeId, Point)> = nodes.to_vec();
    sorted.sort_by_key(|&(id, _)| id);
    for w in sorted.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(GeometryError::DuplicateId(w[0].0));
        }
    }
    let ids: Vec<NodeId> = sorted.iter().map(|&(id, _)| id).collect();
    let pts: Vec<Point> = sorted.iter().map(|&(_, p)| p).collect();
    let index: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();

    // Bucket nodes by unit squares so neighbor search stays near-linear.
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in pts.iter().enumerate() {
        buckets
            .entry((p.x.floor() as i64, p.y.floor() as i64))
            .or_default()
            .push(i);
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); ids.len()];
    let mut edges = Vec::new();
    for u in 0..ids.len() {
        let p = pts[u];
        let (bx, by) = (p.x.floor() as i64, p.y.floor() as i64);
        for di in -1..=1 {
            for dj in -1..=1 {
                if let Some(list) = buckets.get(&(bx + di, by + dj)) {
                    for &v in list {
                        if v <= u {
                            continue;
                        }
                        let d = p.dist(&pts[v]);
                        if d <= EPS {
                            return Err(GeometryError::CoincidentPoints(ids[u], ids[v]));
                        }
                        if d <= 1.0 + EPS {
                            adj[u].push(v);
                            adj[v].push(u);
                            edges.push((u, v));
                        }
                    }
                }
            }
        }
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
    }
    edges.sort_unstable();

    let mut seen = vec![false; ids.len()];
    let mut queue = VecDeque::new();
    if !ids.is_empty() {
        seen[0] = true;
        queue.push_back(0);
    }
    let mut count = 0usize;
    while let Some(u) = queue.pop_front() {
        count += 1;
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    let connected = count == ids.len();

    Ok(UdgInstance {
        ids,
        pts,
        index,
        adj,
        edges,
        connected,
    })
}

/// Vertex set of all triangles whose closed region contains `g`.
pub fn triangles_containing_point(g: Point, udg: &UdgInstance) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::new();
    for t in udg.triangles() {
        let (a, b, c) = (udg.pt(t[0]), udg.pt(t[1]), udg.pt(t[2]));
        if point_in_triangle(g, a, b, c) {
            for &v in &t {
                out.insert(udg.id(v));
            }
        }
    }
    out
}

/// Incidence data of one active cell.
#[derive(Clone, Debug, Default)]
pub struct CellData {
    /// Indices into the instance edge list of edges intersecting the cell.
    pub edges: Vec<usize>,
    /// Indices into the triangle list of triangles overlapping the cell.
    pub triangles: Vec<usize>,
    /// Triangles whose closed region contains the cell center.
    pub center_triangles: Vec<usize>,
}

/// Active cells of an instance plus the incidence needed to derive candidate
/// sets.
#[derive(Clone, Debug)]
pub struct ActiveCellMap {
    pub cells: BTreeMap<CellCoord, CellData>,
    pub triangles: Vec<[usize; 3]>,
}

impl ActiveCellMap {
    pub fn is_active(&self, cell: CellCoord) -> bool {
        self.cells.contains_key(&cell)
    }

    /// Primary candidates of the cell's grid point: vertices of triangles
    /// containing the center.
    pub fn candidates_primary(&self, udg: &UdgInstance, cell: CellCoord) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        if let Some(data) = self.cells.get(&cell) {
            for &t in &data.center_triangles {
                for &v in &self.triangles[t] {
                    out.insert(udg.id(v));
                }
            }
        }
        out
    }

    /// Secondary candidates: endpoints of edges intersecting the cell.
    pub fn candidates_secondary(&self, udg: &UdgInstance, cell: CellCoord) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        if let Some(data) = self.cells.get(&cell) {
            for &e in &data.edges {
                let (u, v) = udg.edges()[e];
                out.insert(udg.id(u));
                out.insert(udg.id(v));
            }
        }
        out
    }

    /// Per-node candidacies: for every node index, the cells it is a
    /// candidate for, with a flag marking primary candidacy.
    pub fn candidacies(&self, udg: &UdgInstance) -> BTreeMap<usize, BTreeMap<CellCoord, bool>> {
        let mut out: BTreeMap<usize, BTreeMap<CellCoord, bool>> = BTreeMap::new();
        for (&cell, data) in &self.cells {
            for &e in &data.edges {
                let (u, v) = udg.edges()[e];
                out.entry(u).or_default().entry(cell).or_insert(false);
                out.entry(v).or_default().entry(cell).or_insert(false);
            }
            for &t in &data.center_triangles {
                for &v in &self.triangles[t] {
                    out.entry(v).or_default().insert(cell, true);
                }
            }
        }
        out
    }
}

/// Computes the active cells of the instance contour.
pub fn compute_active_cells(udg: &UdgInstance) -> ActiveCellMap {
    let mut cells: BTreeMap<CellCoord, CellData> = BTreeMap::new();
    for (e_idx, &(u, v)) in udg.edges().iter().enumerate() {
        for cell in segment_cells(udg.pt(u), udg.pt(v)) {
            cells.entry(cell).or_default().edges.push(e_idx);
        }
    }
    let triangles = udg.triangles();
    for (t_idx, t) in triangles.iter().enumerate() {
        let (a, b, c) = (udg.pt(t[0]), udg.pt(t[1]), udg.pt(t[2]));
        let xs = [a.x, b.x, c.x];
        let ys = [a.y, b.y, c.y];
        let lo_i = ((xs.iter().cloned().fold(f64::MAX, f64::min) - EPS) / CELL_SIDE).floor() as i64;
        let hi_i = ((xs.iter().cloned().fold(f64::MIN, f64::max) + EPS) / CELL_SIDE).floor() as i64;
        let lo_j = ((ys.iter().cloned().fold(f64::MAX, f64::min) - EPS) / CELL_SIDE).floor() as i64;
        let hi_j = ((ys.iter().cloned().fold(f64::MIN, f64::max) + EPS) / CELL_SIDE).floor() as i64;
        for i in lo_i..=hi_i {
            for j in lo_j..=hi_j {
                let cell = CellCoord::new(i, j);
                if triangle_intersects_cell(a, b, c, cell) {
                    let data = cells.entry(cell).or_default();
                    data.triangles.push(t_idx);
                    if point_in_triangle(cell.center(), a, b, c) {
                        data.center_triangles.push(t_idx);
                    }
                }
            }
        }
    }
    ActiveCellMap { cells, triangles }
}

/// Whether some inactive cell is fully enclosed by active cells.
///
/// Inactive cells are flooded from the unbounded exterior with 8-adjacency:
/// two inactive cells touching only at a corner still connect, because the
/// cell polygon keeps a passage there (the corner is loose and gets notched).
/// Any inactive cell the flood cannot reach witnesses a hole in the cell
/// polygon.
pub fn has_enclosed_inactive_region(map: &ActiveCellMap) -> bool {
    if map.cells.is_empty() {
        return false;
    }
    let lo_i = map.cells.keys().map(|c| c.i).min().unwrap() - 1;
    let hi_i = map.cells.keys().map(|c| c.i).max().unwrap() + 1;
    let lo_j = map.cells.keys().map(|c| c.j).min().unwrap() - 1;
    let hi_j = map.cells.keys().map(|c| c.j).max().unwrap() + 1;
    let w = (hi_i - lo_i + 1) as usize;
    let h = (hi_j - lo_j + 1) as usize;
    let at = |i: i64, j: i64| ((j - lo_j) as usize) * w + ((i - lo_i) as usize);
    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::new();
    seen[at(lo_i, lo_j)] = true;
    queue.push_back((lo_i, lo_j));
    while let Some((i, j)) = queue.pop_front() {
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let (ni, nj) = (i + di, j + dj);
                if ni < lo_i || ni > hi_i || nj < lo_j || nj > hi_j {
                    continue;
                }
                if seen[at(ni, nj)] || map.is_active(CellCoord::new(ni, nj)) {
                    continue;
                }
                seen[at(ni, nj)] = true;
                queue.push_back((ni, nj));
            }
        }
    }
    for i in lo_i..=hi_i {
        for j in lo_j..=hi_j {
            if !map.is_active(CellCoord::new(i, j)) && !seen[at(i, j)] {
                return true;
            }
        }
    }
    false
}
