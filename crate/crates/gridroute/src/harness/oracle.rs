//! Exact distance baselines: hop counts by breadth-first search and
//! Euclidean shortest-path lengths by Dijkstra.

use std::cmp::Ordering;
use std::collections::{BTreeMap, VecDeque};

use crate::geometry::{CellCoord, UdgInstance};
use crate::grid::GridBuild;

/// Hop distances from `source` over an adjacency-list graph; `None` for
/// unreachable vertices.
pub fn bfs_distances(adj: &[Vec<usize>], source: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; adj.len()];
    let mut queue = VecDeque::new();
    dist[source] = Some(0);
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap();
        for &v in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Min-heap entry ordered by distance.
#[derive(PartialEq)]
struct HeapItem {
    d: f64,
    v: usize,
}

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, o: &Self) -> Ordering {
        o.d.total_cmp(&self.d).then_with(|| o.v.cmp(&self.v))
    }
}

/// Dijkstra over an explicit weighted adjacency list.
pub fn dijkstra(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<Option<f64>> {
    let mut dist: Vec<Option<f64>> = vec![None; adj.len()];
    let mut heap = std::collections::BinaryHeap::new();
    dist[source] = Some(0.0);
    heap.push(HeapItem { d: 0.0, v: source });
    while let Some(HeapItem { d, v }) = heap.pop() {
        if dist[v].map_or(true, |cur| d > cur) {
            continue;
        }
        for &(w, len) in &adj[v] {
            let nd = d + len;
            if dist[w].map_or(true, |cur| nd < cur) {
                dist[w] = Some(nd);
                heap.push(HeapItem { d: nd, v: w });
            }
        }
    }
    dist
}

/// Hop distances from the node at index `source` in the instance.
pub fn udg_hops(inst: &UdgInstance, source: usize) -> Vec<Option<u32>> {
    let adj: Vec<Vec<usize>> = (0..inst.n()).map(|i| inst.adj(i).to_vec()).collect();
    bfs_distances(&adj, source)
}

/// Euclidean shortest-path lengths from the node at index `source`, with
/// every edge weighted by the distance between its endpoints.
pub fn udg_euclidean(inst: &UdgInstance, source: usize) -> Vec<Option<f64>> {
    let adj: Vec<Vec<(usize, f64)>> = (0..inst.n())
        .map(|i| {
            inst.adj(i)
                .iter()
                .map(|&j| (j, inst.pt(i).dist(&inst.pt(j))))
                .collect()
        })
        .collect();
    dijkstra(&adj, source)
}

/// The grid graph as an indexed adjacency list, for hop queries between
/// cells.
pub struct GridIndex {
    cells: Vec<CellCoord>,
    index: BTreeMap<CellCoord, usize>,
    adj: Vec<Vec<usize>>,
}

impl GridIndex {
    pub fn new(build: &GridBuild) -> Self {
        let adjacency = build.grid_adjacency();
        let cells: Vec<CellCoord> = adjacency.keys().cloned().collect();
        let index: BTreeMap<CellCoord, usize> =
            cells.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let adj = cells
            .iter()
            .map(|c| adjacency[c].iter().map(|n| index[n]).collect())
            .collect();
        GridIndex { cells, index, adj }
    }

    pub fn cells(&self) -> &[CellCoord] {
        &self.cells
    }

    pub fn index_of(&self, cell: CellCoord) -> Option<usize> {
        self.index.get(&cell).copied()
    }

    /// Hop distances in the grid graph from `cell`.
    pub fn hops_from(&self, cell: CellCoord) -> Option<Vec<Option<u32>>> {
        let s = self.index_of(cell)?;
        Some(bfs_distances(&self.adj, s))
    }
}
