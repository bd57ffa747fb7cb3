//! The cell graph: corners of active cells joined along cell sides.
//!
//! A corner shared by exactly two active cells that touch only diagonally
//! is loose; loose corners carry no vertex. Every edge is a full cell side,
//! so all edges have length [`CELL_SIDE`].

use std::collections::{BTreeMap, BTreeSet};

use super::oracle::bfs_distances;
use crate::geometry::{ActiveCellMap, CellCoord, Point, CELL_SIDE};

/// A lattice corner; `(i, j)` is the point `(i * CELL_SIDE, j * CELL_SIDE)`,
/// the lower-left corner of cell `(i, j)`.
pub type Corner = (i64, i64);

/// Point position of a corner.
pub fn corner_point(c: Corner) -> Point {
    Point::new(c.0 as f64 * CELL_SIDE, c.1 as f64 * CELL_SIDE)
}

/// Graph over the non-loose corners of the active cells.
#[derive(Clone, Debug)]
pub struct CellGraph {
    corners: Vec<Corner>,
    index: BTreeMap<Corner, usize>,
    adj: Vec<Vec<usize>>,
    loose: BTreeSet<Corner>,
    edge_count: usize,
}

/// The four cells incident to a corner.
fn cells_at(c: Corner) -> [CellCoord; 4] {
    [
        CellCoord::new(c.0 - 1, c.1 - 1),
        CellCoord::new(c.0, c.1 - 1),
        CellCoord::new(c.0 - 1, c.1),
        CellCoord::new(c.0, c.1),
    ]
}

/// A corner of exactly two active cells that meet only at that corner.
pub fn is_loose(active: &BTreeSet<CellCoord>, c: Corner) -> bool {
    let [sw, se, nw, ne] = cells_at(c);
    let a = |cell: CellCoord| active.contains(&cell);
    let count = [sw, se, nw, ne].iter().filter(|&&x| a(x)).count();
    count == 2 && ((a(sw) && a(ne)) || (a(se) && a(nw)))
}

/// Builds the cell graph for a set of active cells.
pub fn build_cell_graph(active: &BTreeSet<CellCoord>) -> CellGraph {
    let mut present: BTreeSet<Corner> = BTreeSet::new();
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
    let mut loose = BTreeSet::new();
    let mut corners = Vec::new();
    for &c in &present {
        if is_loose(active, c) {
            loose.insert(c);
        } else {
            corners.push(c);
        }
    }
    let index: BTreeMap<Corner, usize> =
        corners.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut adj = vec![Vec::new(); corners.len()];
    let mut edge_count = 0;
    for (&c, &u) in &index {
        // The side to the east bounds the cells above and below it; the
        // side to the north bounds the cells left and right of it. Only
        // sides of an active cell qualify.
        let east = (c.0 + 1, c.1);
        if index.contains_key(&east)
            && (active.contains(&CellCoord::new(c.0, c.1))
                || active.contains(&CellCoord::new(c.0, c.1 - 1)))
        {
            let v = index[&east];
            adj[u].push(v);
            adj[v].push(u);
            edge_count += 1;
        }
        let north = (c.0, c.1 + 1);
        if index.contains_key(&north)
            && (active.contains(&CellCoord::new(c.0, c.1))
                || active.contains(&CellCoord::new(c.0 - 1, c.1)))
        {
            let v = index[&north];
            adj[u].push(v);
            adj[v].push(u);
            edge_count += 1;
        }
    }
    for a in &mut adj {
        a.sort_unstable();
    }
    CellGraph {
        corners,
        index,
        adj,
        loose,
        edge_count,
    }
}

/// Active cell set of a computed cell map.
pub fn active_set(map: &ActiveCellMap) -> BTreeSet<CellCoord> {
    map.cells.keys().cloned().collect()
}

impl CellGraph {
    pub fn vertex_count(&self) -> usize {
        self.corners.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn corners(&self) -> &[Corner] {
        &self.corners
    }

    pub fn loose(&self) -> &BTreeSet<Corner> {
        &self.loose
    }

    pub fn index_of(&self, c: Corner) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn point(&self, v: usize) -> Point {
        corner_point(self.corners[v])
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    /// Hop distances from vertex `v`; edges all have length `CELL_SIDE`,
    /// so graph distance is the hop count times `CELL_SIDE`.
    pub fn hops_from(&self, v: usize) -> Vec<Option<u32>> {
        bfs_distances(&self.adj, v)
    }

    /// The vertices among a cell's four corners, in corner order.
    pub fn cell_corners(&self, cell: CellCoord) -> Vec<usize> {
        [
            (cell.i, cell.j),
            (cell.i + 1, cell.j),
            (cell.i, cell.j + 1),
            (cell.i + 1, cell.j + 1),
        ]
        .iter()
        .filter_map(|&c| self.index_of(c))
        .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cells(list: &[(i64, i64)]) -> BTreeSet<CellCoord> {
        list.iter().map(|&(i, j)| CellCoord::new(i, j)).collect()
    }

    #[test]
    fn single_cell_has_four_corners_and_four_sides() {
        let g = build_cell_graph(&cells(&[(0, 0)]));
        assert_eq!(g.vertex_count(), 4);
        assert_eq!(g.edge_count(), 4);
        assert!(g.loose().is_empty());
    }

    #[test]
    fn diagonal_pair_excludes_the_shared_corner() {
        let g = build_cell_graph(&cells(&[(0, 0), (1, 1)]));
        assert!(g.loose().contains(&(1, 1)));
        assert_eq!(g.index_of((1, 1)), None);
        assert_eq!(g.vertex_count(), 6);
        assert_eq!(g.edge_count(), 4);
    }

    #[test]
    fn two_by_two_block_has_nine_corners_twelve_sides() {
        let g = build_cell_graph(&cells(&[(0, 0), (1, 0), (0, 1), (1, 1)]));
        assert_eq!(g.vertex_count(), 9);
        assert_eq!(g.edge_count(), 12);
        assert!(g.loose().is_empty());
    }

    #[test]
    fn corner_of_two_adjacent_cells_is_not_loose() {
        let active = cells(&[(0, 0), (1, 0)]);
        assert!(!is_loose(&active, (1, 0)));
        assert!(!is_loose(&active, (1, 1)));
        let g = build_cell_graph(&active);
        assert_eq!(g.vertex_count(), 6);
        assert_eq!(g.edge_count(), 7);
    }

    #[test]
    fn sides_between_two_inactive_cells_are_not_edges() {
        // A 3-wide U: the two prongs' inner corners face each other across
        // inactive territory and must not be joined.
        let active = cells(&[(0, 0), (1, 0), (2, 0), (0, 1), (2, 1)]);
        let g = build_cell_graph(&active);
        let a = g.index_of((1, 2)).unwrap();
        let b = g.index_of((2, 2)).unwrap();
        assert!(!g.neighbors(a).contains(&b));
    }

    #[test]
    fn all_edges_have_unit_side_length() {
        let active = cells(&[(0, 0), (1, 0), (1, 1), (2, 1), (3, 0), (2, 0)]);
        let g = build_cell_graph(&active);
        for u in 0..g.vertex_count() {
            for &v in g.neighbors(u) {
                let d = g.point(u).dist(&g.point(v));
                assert!((d - CELL_SIDE).abs() < 1e-12);
            }
        }
    }
}
