//! The grid layer: cell representatives, virtual grid nodes, and graph
//! paths realizing grid edges.
//!
//! Active cells form the *grid graph*: one virtual node per cell center,
//! edges between 4-adjacent cells. Each cell is served by an elected
//! representative node of the unit-disk graph; a representative may serve up
//! to [`MAX_CELLS_PER_NODE`] cells and addresses each as a distinct virtual
//! id. Grid edges map to graph paths of at most three hops between the
//! representatives, built distributedly in [`paths`] and mirrored by a
//! centralized oracle here for verification.

pub mod adapter;
pub mod election;
pub mod paths;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::geometry::{
    ActiveCellMap, CellCoord, NodeId, UdgInstance, CELL_SIDE, EPS, MAX_CELLS_PER_NODE,
};
use crate::sim::{LocalMode, RoundReport, SimConfig, SimError, SimNetwork};

pub use election::{Claim, ElectionProgram, ELECTION_ROUNDS};
pub use paths::{edge_key, EdgeKey, PathProgram, JOIN_ROUNDS, WAVE_ROUNDS};

/// Message size for construction-phase networks, in words.
///
/// Election and path construction combine, per round, one tuple per cell or
/// per nearby representative into a single broadcast. Packing bounds make
/// both counts constants (at most 64 cells per node; representatives within
/// three hops are bounded by an area argument), so the combined payload is a
/// constant multiple of a single id-sized tuple. This constant is generous
/// enough for the worst case and independent of the instance size.
pub const CONSTRUCTION_W_MAX: usize = 65_536;

/// Errors from grid construction.
#[derive(Debug, Error)]
pub enum GridError {
    #[error("active cell ({0}, {1}) has no candidates")]
    NoCandidates(i64, i64),
    #[error("candidates disagree on the representative of cell ({0}, {1})")]
    ElectionDisagreement(i64, i64),
    #[error("grid cell ({0}, {1}) was not claimed by any representative")]
    UnclaimedCell(i64, i64),
    #[error("no path materialized for grid edge {0:?}-{1:?}")]
    PathNotFound(CellCoord, CellCoord),
    #[error("path for grid edge {0:?}-{1:?} exceeds three hops")]
    PathTooLong(CellCoord, CellCoord),
    #[error("node {0} represents more than {MAX_CELLS_PER_NODE} cells")]
    TooManyCells(NodeId),
    #[error("node id {0} too large for virtual id encoding")]
    IdTooLarge(NodeId),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// All grid edges of the active-cell set, as normalized keys in ascending
/// order.
pub fn grid_edges(map: &ActiveCellMap) -> Vec<EdgeKey> {
    let mut out = Vec::new();
    for &cell in map.cells.keys() {
        for (di, dj) in [(1, 0), (0, 1)] {
            let other = cell.offset(di, dj);
            if map.is_active(other) {
                out.push((cell, other));
            }
        }
    }
    out.sort_unstable();
    out
}

/// Virtual id of the `idx`-th cell (in cell order) served by `rep`.
pub fn virtual_id(rep: NodeId, idx: usize) -> u64 {
    rep * MAX_CELLS_PER_NODE + idx as u64
}

/// The node hosting a virtual id.
pub fn host_of_vid(vid: u64) -> NodeId {
    vid / MAX_CELLS_PER_NODE
}

/// Output of grid construction: the elected structure plus the paths and
/// forwarding state distributed over the graph.
#[derive(Clone, Debug)]
pub struct GridBuild {
    /// Active cells in ascending order.
    pub cells: Vec<CellCoord>,
    pub rep_of: BTreeMap<CellCoord, NodeId>,
    /// Cells served by each representative, ascending.
    pub cells_of_rep: BTreeMap<NodeId, Vec<CellCoord>>,
    pub vid_of_cell: BTreeMap<CellCoord, u64>,
    pub cell_of_vid: BTreeMap<u64, CellCoord>,
    /// Graph path realizing each grid edge, from the representative of the
    /// lower cell to the representative of the higher cell.
    pub edge_paths: BTreeMap<EdgeKey, Vec<NodeId>>,
    /// Per-node forwarding state: next hop on an edge path, keyed by edge
    /// and direction (true = toward the higher cell's representative).
    pub next_hops: BTreeMap<NodeId, BTreeMap<(EdgeKey, bool), NodeId>>,
    pub election_comm_rounds: u64,
    pub election_rounds_executed: u64,
    pub path_comm_rounds: u64,
    pub path_rounds_executed: u64,
    /// Simulator traces of both phases when tracing was requested.
    pub trace: Option<String>,
}

impl GridBuild {
    pub fn vid(&self, cell: CellCoord) -> u64 {
        self.vid_of_cell[&cell]
    }

    /// Grid adjacency derived from the realized edges.
    pub fn grid_adjacency(&self) -> BTreeMap<CellCoord, Vec<CellCoord>> {
        let mut adj: BTreeMap<CellCoord, Vec<CellCoord>> = BTreeMap::new();
        for &(a, b) in self.edge_paths.keys() {
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
        adj
    }
}

/// Options for distributed construction.
#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub local_mode: LocalMode,
    pub trace: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            local_mode: LocalMode::Broadcast,
            trace: false,
        }
    }
}

fn comm_rounds(reports: &[RoundReport]) -> u64 {
    reports
        .iter()
        .filter(|r| r.local_messages + r.global_messages > 0)
        .count() as u64
}

/// Runs representative election and path construction on a simulated
/// network over the instance.
pub fn build_grid(
    udg: &UdgInstance,
    map: &ActiveCellMap,
    opts: &BuildOptions,
) -> Result<GridBuild, GridError> {
    let ids: Vec<NodeId> = udg.ids().to_vec();
    let edges: Vec<(NodeId, NodeId)> = udg
        .edges()
        .iter()
        .map(|&(u, v)| (udg.id(u), udg.id(v)))
        .collect();
    let cfg = SimConfig {
        local_mode: opts.local_mode,
        gamma: 1.0,
        w_max: CONSTRUCTION_W_MAX,
        trace: opts.trace,
        shuffle_seed: None,
    };

    // Phase: election.
    let candidacies = map.candidacies(udg);
    let mut net = SimNetwork::new(&ids, &edges, cfg.clone())?;
    let mut programs: Vec<ElectionProgram> = (0..udg.n())
        .map(|u| {
            ElectionProgram::new(
                udg.id(u),
                udg.pt(u),
                candidacies.get(&u).cloned().unwrap_or_default(),
            )
        })
        .collect();
    let election_rounds_executed =
        net.run_until(&mut programs, ELECTION_ROUNDS + 2, SimNetwork::quiescent)?;
    let election_comm_rounds = comm_rounds(net.reports());

    let mut rep_of: BTreeMap<CellCoord, NodeId> = BTreeMap::new();
    for p in &programs {
        for (&cell, claim) in p.results() {
            match rep_of.get(&cell) {
                Some(&id) if id != claim.id => {
                    return Err(GridError::ElectionDisagreement(cell.i, cell.j))
                }
                Some(_) => {}
                None => {
                    rep_of.insert(cell, claim.id);
                }
            }
        }
    }
    for &cell in map.cells.keys() {
        if !rep_of.contains_key(&cell) {
            return Err(GridError::NoCandidates(cell.i, cell.j));
        }
    }

    let mut cells_of_rep: BTreeMap<NodeId, Vec<CellCoord>> = BTreeMap::new();
    for (&cell, &rep) in &rep_of {
        cells_of_rep.entry(rep).or_default().push(cell);
    }
    let mut vid_of_cell = BTreeMap::new();
    let mut cell_of_vid = BTreeMap::new();
    for (&rep, cells) in &cells_of_rep {
        if cells.len() > MAX_CELLS_PER_NODE as usize {
            return Err(GridError::TooManyCells(rep));
        }
        if rep > u64::MAX / MAX_CELLS_PER_NODE {
            return Err(GridError::IdTooLarge(rep));
        }
        for (idx, &cell) in cells.iter().enumerate() {
            let vid = virtual_id(rep, idx);
            vid_of_cell.insert(cell, vid);
            cell_of_vid.insert(vid, cell);
        }
    }

    // Phase: paths.
    let mut net2 = SimNetwork::new(&ids, &edges, cfg)?;
    let mut path_programs: Vec<PathProgram> = (0..udg.n())
        .map(|u| {
            let id = udg.id(u);
            PathProgram::new(id, cells_of_rep.get(&id).cloned().unwrap_or_default())
        })
        .collect();
    let path_rounds_executed = net2.run_until(
        &mut path_programs,
        WAVE_ROUNDS + JOIN_ROUNDS + 2,
        SimNetwork::quiescent,
    )?;
    let path_comm_rounds = comm_rounds(net2.reports());

    let mut edge_paths: BTreeMap<EdgeKey, Vec<NodeId>> = BTreeMap::new();
    let mut next_hops: BTreeMap<NodeId, BTreeMap<(EdgeKey, bool), NodeId>> = BTreeMap::new();
    for p in &path_programs {
        if let Some(first) = p.failed.first() {
            return Err(GridError::PathNotFound(first.0, first.1));
        }
        for &key in p.internal_edges() {
            edge_paths.insert(key, vec![rep_of[&key.0]]);
        }
        for (&key, path) in p.completed_paths() {
            // Stored from the initiating representative to the target;
            // normalize to run from the lower cell's representative.
            let mut path = path.clone();
            if path.first() != Some(&rep_of[&key.0]) {
                path.reverse();
            }
            edge_paths.insert(key, path);
        }
    }
    for (u, p) in path_programs.iter().enumerate() {
        if !p.next_hops().is_empty() {
            next_hops.insert(udg.id(u), p.next_hops().clone());
        }
    }

    for key in grid_edges(map) {
        let Some(path) = edge_paths.get(&key) else {
            return Err(GridError::PathNotFound(key.0, key.1));
        };
        if path.len() > 4 {
            return Err(GridError::PathTooLong(key.0, key.1));
        }
        if path.first() != Some(&rep_of[&key.0]) || path.last() != Some(&rep_of[&key.1]) {
            return Err(GridError::PathNotFound(key.0, key.1));
        }
    }

    let trace = if opts.trace {
        let mut buf = Vec::new();
        net.trace_export(&mut buf).unwrap();
        net2.trace_export(&mut buf).unwrap();
        Some(String::from_utf8(buf).unwrap())
    } else {
        None
    };

    Ok(GridBuild {
        cells: map.cells.keys().cloned().collect(),
        rep_of,
        cells_of_rep,
        vid_of_cell,
        cell_of_vid,
        edge_paths,
        next_hops,
        election_comm_rounds,
        election_rounds_executed,
        path_comm_rounds,
        path_rounds_executed,
        trace,
    })
}

/// Centralized election: best candidate by primary flag, distance to the
/// cell center, then id.
pub fn elect_representative(
    udg: &UdgInstance,
    map: &ActiveCellMap,
    cell: CellCoord,
) -> Option<NodeId> {
    let center = cell.center();
    let pick = |ids: &std::collections::BTreeSet<NodeId>| {
        ids.iter()
            .map(|&id| {
                let p = udg.pt(udg.idx_of(id).unwrap());
                (p.dist2(&center), id)
            })
            .min_by(|a, b| a.partial_cmp(b).unwrap())
            .map(|(_, id)| id)
    };
    let primary = map.candidates_primary(udg, cell);
    if !primary.is_empty() {
        return pick(&primary);
    }
    pick(&map.candidates_secondary(udg, cell))
}

/// Centralized mirror of the distributed construction, for verification.
pub struct OracleBuild {
    pub rep_of: BTreeMap<CellCoord, NodeId>,
    pub edge_paths: BTreeMap<EdgeKey, Vec<NodeId>>,
}

/// Parent pointers of a breadth-first search from `root`, truncated at
/// depth 3: `parent(v)` is the smallest-id neighbor closer to the root.
fn bfs_parents(udg: &UdgInstance, root: usize) -> BTreeMap<usize, usize> {
    let mut dist: BTreeMap<usize, i64> = BTreeMap::new();
    dist.insert(root, 0);
    let mut frontier = vec![root];
    for d in 1..=3 {
        let mut next = Vec::new();
        for &u in &frontier {
            for &v in udg.adj(u) {
                if !dist.contains_key(&v) && !next.contains(&v) {
                    next.push(v);
                }
            }
        }
        for &v in &next {
            dist.insert(v, d);
        }
        frontier = next;
    }
    let mut parent = BTreeMap::new();
    for (&v, &d) in &dist {
        if d == 0 {
            continue;
        }
        let p = udg
            .adj(v)
            .iter()
            .filter(|&&u| dist.get(&u) == Some(&(d - 1)))
            .min_by_key(|&&u| udg.id(u));
        if let Some(&p) = p {
            parent.insert(v, p);
        }
    }
    parent
}

/// Builds representatives and edge paths centrally, mirroring the
/// distributed rules exactly.
pub fn build_representation_oracle(
    udg: &UdgInstance,
    map: &ActiveCellMap,
) -> Result<OracleBuild, GridError> {
    let mut rep_of = BTreeMap::new();
    for &cell in map.cells.keys() {
        match elect_representative(udg, map, cell) {
            Some(id) => {
                rep_of.insert(cell, id);
            }
            None => return Err(GridError::NoCandidates(cell.i, cell.j)),
        }
    }
    let mut edge_paths = BTreeMap::new();
    for key in grid_edges(map) {
        let (r_lo, r_hi) = (rep_of[&key.0], rep_of[&key.1]);
        if r_lo == r_hi {
            edge_paths.insert(key, vec![r_lo]);
            continue;
        }
        let (initiator, target) = if r_lo < r_hi { (r_lo, r_hi) } else { (r_hi, r_lo) };
        let target_idx = udg.idx_of(target).unwrap();
        let parents = bfs_parents(udg, target_idx);
        let mut path = vec![initiator];
        let mut cur = udg.idx_of(initiator).unwrap();
        while udg.id(cur) != target {
            let Some(&next) = parents.get(&cur) else {
                return Err(GridError::PathNotFound(key.0, key.1));
            };
            path.push(udg.id(next));
            cur = next;
            if path.len() > 4 {
                return Err(GridError::PathTooLong(key.0, key.1));
            }
        }
        if path.first() != Some(&r_lo) {
            path.reverse();
        }
        edge_paths.insert(key, path);
    }
    Ok(OracleBuild { rep_of, edge_paths })
}

/// Distance bound from a cell center to any of its candidates.
pub fn candidate_reach() -> f64 {
    1.0 + CELL_SIDE / 2f64.sqrt() + EPS
}
