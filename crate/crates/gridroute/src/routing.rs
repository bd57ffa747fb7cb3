//! Stateless routing on the grid and on the unit-disk graph.
//!
//! Grid routing works on interval labels alone: a message at grid node `g`
//! bound for `t` first tries to switch portals through a west or east
//! neighbor whose portal interval lies strictly between the current and the
//! target portal (or covers the current one when the two are incomparable),
//! and otherwise moves vertically within its portal by the same rule on own
//! intervals. The walk is exact: it takes `hop`-many steps where `hop` is
//! the grid distance.
//!
//! UDG routing lifts this to graph nodes: a packet first moves to the
//! representative of its cell, then alternates grid decisions (at
//! representatives) with stored next hops (at transit nodes on edge paths)
//! until the target's representative is reached, which is adjacent to the
//! target. Every forwarding decision depends only on the current node's
//! state and the target label.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::geometry::{cell_of, CellCoord, NodeId, UdgInstance};
use crate::grid::{edge_key, EdgeKey, GridBuild};
use crate::portal::NodeLabel;

/// Relation between two closed integer intervals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelationKind {
    Equal,
    /// Strict containment of the first in the second.
    Subset,
    /// Strict containment of the second in the first.
    Superset,
    Incomparable,
}

/// Classifies `a` against `b`.
pub fn interval_relation(a: (u64, u64), b: (u64, u64)) -> RelationKind {
    if a == b {
        RelationKind::Equal
    } else if b.0 <= a.0 && a.1 <= b.1 {
        RelationKind::Subset
    } else if a.0 <= b.0 && b.1 <= a.1 {
        RelationKind::Superset
    } else {
        RelationKind::Incomparable
    }
}

fn subset_eq(a: (u64, u64), b: (u64, u64)) -> bool {
    matches!(
        interval_relation(a, b),
        RelationKind::Equal | RelationKind::Subset
    )
}

fn subset_strict(a: (u64, u64), b: (u64, u64)) -> bool {
    interval_relation(a, b) == RelationKind::Subset
}

fn incomparable(a: (u64, u64), b: (u64, u64)) -> bool {
    interval_relation(a, b) == RelationKind::Incomparable
}

/// Grid direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dir {
    N,
    E,
    S,
    W,
}

impl Dir {
    pub fn offset(self) -> (i64, i64) {
        match self {
            Dir::N => (0, 1),
            Dir::E => (1, 0),
            Dir::S => (0, -1),
            Dir::W => (-1, 0),
        }
    }
}

/// What a grid node knows for routing: its own label and its four grid
/// neighbors' labels (absent where the adjacent cell is inactive).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridNodeState {
    pub own: NodeLabel,
    /// Indexed N, E, S, W.
    pub neighbors: [Option<NodeLabel>; 4],
}

impl GridNodeState {
    fn neighbor(&self, d: Dir) -> Option<NodeLabel> {
        let i = match d {
            Dir::N => 0,
            Dir::E => 1,
            Dir::S => 2,
            Dir::W => 3,
        };
        self.neighbors[i]
    }
}

/// Target label: the grid label of the target's cell plus the target id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RoutingLabel {
    pub grid: NodeLabel,
    pub target_id: NodeId,
}

/// Wire size of an encoded label.
pub const LABEL_WIRE_BYTES: usize = 40;

/// Encodes a label as five little-endian 64-bit words:
/// own interval, portal interval, target id.
pub fn encode_label(label: &RoutingLabel) -> [u8; LABEL_WIRE_BYTES] {
    let mut out = [0u8; LABEL_WIRE_BYTES];
    let words = [
        label.grid.l,
        label.grid.r,
        label.grid.pl,
        label.grid.pr,
        label.target_id,
    ];
    for (i, w) in words.iter().enumerate() {
        out[i * 8..(i + 1) * 8].copy_from_slice(&w.to_le_bytes());
    }
    out
}

/// Decodes a label from its wire form.
pub fn decode_label(bytes: &[u8; LABEL_WIRE_BYTES]) -> RoutingLabel {
    let word = |i: usize| {
        let mut b = [0u8; 8];
        b.copy_from_slice(&bytes[i * 8..(i + 1) * 8]);
        u64::from_le_bytes(b)
    };
    RoutingLabel {
        grid: NodeLabel {
            l: word(0),
            r: word(1),
            pl: word(2),
            pr: word(3),
        },
        target_id: word(4),
    }
}

/// Routing failures.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum RoutingError {
    #[error("no guard fired at grid node {at:?}; labels are corrupt")]
    NoMoveAvailable { at: CellCoord },
    #[error("transit node {node} has no next hop for its edge")]
    MissingTransitState { node: NodeId },
    #[error("node {id} sits in an inactive cell")]
    InactiveCell { id: NodeId },
    #[error("unknown node {id}")]
    UnknownNode { id: NodeId },
    #[error("routing exceeded {limit} steps without arriving")]
    TooManySteps { limit: usize },
    #[error("arrived at the target cell but the target is not adjacent")]
    DeliveryFailed { at: CellCoord },
}

/// One grid routing decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridStep {
    Arrived,
    Move(Dir),
}

fn guard(cur: (u64, u64), nb: Option<(u64, u64)>, tgt: (u64, u64)) -> bool {
    let Some(nb) = nb else { return false };
    (subset_strict(cur, nb) && subset_eq(nb, tgt))
        || (subset_eq(tgt, nb) && subset_strict(nb, cur))
        || (incomparable(cur, tgt) && subset_strict(cur, nb))
}

/// Portal switch: west, then east, on portal intervals.
pub fn try_horizontal(state: &GridNodeState, t: &RoutingLabel) -> Option<Dir> {
    let g = state.own.portal();
    let tp = t.grid.portal();
    if g == tp {
        return None;
    }
    for d in [Dir::W, Dir::E] {
        if guard(g, state.neighbor(d).map(|n| n.portal()), tp) {
            return Some(d);
        }
    }
    None
}

/// Vertical move within the portal: north, then south, on own intervals.
pub fn go_vertical(state: &GridNodeState, t: &RoutingLabel, at: CellCoord) -> Result<Dir, RoutingError> {
    let g = state.own.own();
    let tl = t.grid.own();
    for d in [Dir::N, Dir::S] {
        if guard(g, state.neighbor(d).map(|n| n.own()), tl) {
            return Ok(d);
        }
    }
    Err(RoutingError::NoMoveAvailable { at })
}

/// One step of grid routing at a node with `state` toward `t`.
pub fn rho_gamma(state: &GridNodeState, t: &RoutingLabel, at: CellCoord) -> Result<GridStep, RoutingError> {
    if state.own.own() == t.grid.own() {
        return Ok(GridStep::Arrived);
    }
    if let Some(d) = try_horizontal(state, t) {
        return Ok(GridStep::Move(d));
    }
    go_vertical(state, t, at).map(GridStep::Move)
}

/// Builds per-cell routing state from the labels of the active cells.
pub fn grid_states(labels: &BTreeMap<CellCoord, NodeLabel>) -> BTreeMap<CellCoord, GridNodeState> {
    labels
        .iter()
        .map(|(&cell, &own)| {
            let mut neighbors = [None; 4];
            for (i, d) in [Dir::N, Dir::E, Dir::S, Dir::W].into_iter().enumerate() {
                let (di, dj) = d.offset();
                neighbors[i] = labels.get(&cell.offset(di, dj)).copied();
            }
            (cell, GridNodeState { own, neighbors })
        })
        .collect()
}

/// Iterates grid routing from `from` until arrival; returns the cell
/// sequence including both endpoints.
pub fn grid_walk(
    states: &BTreeMap<CellCoord, GridNodeState>,
    from: CellCoord,
    t: &RoutingLabel,
) -> Result<Vec<CellCoord>, RoutingError> {
    let mut cells = vec![from];
    let mut cur = from;
    loop {
        let state = &states[&cur];
        match rho_gamma(state, t, cur)? {
            GridStep::Arrived => return Ok(cells),
            GridStep::Move(d) => {
                let (di, dj) = d.offset();
                cur = cur.offset(di, dj);
                cells.push(cur);
                if cells.len() > states.len() {
                    return Err(RoutingError::TooManySteps {
                        limit: states.len(),
                    });
                }
            }
        }
    }
}

/// Where the packet currently sits relative to the grid structure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ctx {
    /// At the source, before the first decision.
    Start,
    /// At the representative of `cell`, making grid decisions.
    AtGrid(CellCoord),
    /// In transit on the path of a grid edge.
    OnPath { key: EdgeKey, toward_hi: bool },
}

/// A routed UDG path together with the grid decisions along it.
#[derive(Clone, Debug)]
pub struct RouteRecord {
    /// Node ids from source to target inclusive.
    pub path: Vec<NodeId>,
    /// Cells where grid decisions were evaluated, in order.
    pub grid_cells: Vec<CellCoord>,
}

/// Routing over a built grid: pure lookups, no mutation.
pub struct Router<'a> {
    inst: &'a UdgInstance,
    build: &'a GridBuild,
    labels: &'a BTreeMap<CellCoord, NodeLabel>,
    states: BTreeMap<CellCoord, GridNodeState>,
}

impl<'a> Router<'a> {
    pub fn new(
        inst: &'a UdgInstance,
        build: &'a GridBuild,
        labels: &'a BTreeMap<CellCoord, NodeLabel>,
    ) -> Self {
        Router {
            inst,
            build,
            labels,
            states: grid_states(labels),
        }
    }

    pub fn states(&self) -> &BTreeMap<CellCoord, GridNodeState> {
        &self.states
    }

    /// The target label for a node: its cell's grid label plus its id.
    pub fn make_label(&self, v: NodeId) -> Result<RoutingLabel, RoutingError> {
        let idx = self
            .inst
            .idx_of(v)
            .ok_or(RoutingError::UnknownNode { id: v })?;
        let cell = cell_of(self.inst.pt(idx));
        let grid = *self
            .labels
            .get(&cell)
            .ok_or(RoutingError::InactiveCell { id: v })?;
        Ok(RoutingLabel {
            grid,
            target_id: v,
        })
    }

    fn is_adjacent(&self, v: NodeId, t: NodeId) -> bool {
        let idx = self.inst.idx_of(v).unwrap();
        self.inst.adj(idx).iter().any(|&w| self.inst.id(w) == t)
    }

    /// Routes from `s` to `t`, returning the full hop sequence.
    pub fn route(&self, s: NodeId, t: NodeId) -> Result<RouteRecord, RoutingError> {
        let label = self.make_label(t)?;
        self.route_to_label(s, &label)
    }

    /// Routes from `s` toward an externally supplied label.
    pub fn route_to_label(&self, s: NodeId, label: &RoutingLabel) -> Result<RouteRecord, RoutingError> {
        if self.inst.idx_of(s).is_none() {
            return Err(RoutingError::UnknownNode { id: s });
        }
        let mut rec = RouteRecord {
            path: vec![s],
            grid_cells: Vec::new(),
        };
        let mut v = s;
        let mut ctx = Ctx::Start;
        let limit = self.inst.n() + 5;
        while v != label.target_id {
            if rec.path.len() > limit {
                return Err(RoutingError::TooManySteps { limit });
            }
            let (next, next_ctx) = self.step(v, ctx, label, &mut rec.grid_cells)?;
            rec.path.push(next);
            v = next;
            ctx = next_ctx;
        }
        Ok(rec)
    }

    /// One forwarding decision at node `v`.
    fn step(
        &self,
        v: NodeId,
        ctx: Ctx,
        t: &RoutingLabel,
        grid_cells: &mut Vec<CellCoord>,
    ) -> Result<(NodeId, Ctx), RoutingError> {
        // Direct delivery whenever the target is a neighbor.
        if self.is_adjacent(v, t.target_id) {
            return Ok((t.target_id, Ctx::Start));
        }
        match ctx {
            Ctx::Start => {
                let idx = self.inst.idx_of(v).unwrap();
                let cell = cell_of(self.inst.pt(idx));
                let rep = *self
                    .build
                    .rep_of
                    .get(&cell)
                    .ok_or(RoutingError::InactiveCell { id: v })?;
                if rep == v {
                    self.grid_decision(v, cell, t, grid_cells)
                } else {
                    // The representative is within one hop of every node of
                    // its cell, and the packet continues from it at this
                    // grid node.
                    Ok((rep, Ctx::AtGrid(cell)))
                }
            }
            Ctx::AtGrid(cell) => self.grid_decision(v, cell, t, grid_cells),
            Ctx::OnPath { key, toward_hi } => {
                let next = self
                    .build
                    .next_hops
                    .get(&v)
                    .and_then(|m| m.get(&(key, toward_hi)))
                    .copied()
                    .ok_or(RoutingError::MissingTransitState { node: v })?;
                let path = &self.build.edge_paths[&key];
                let far_rep = if toward_hi {
                    *path.last().unwrap()
                } else {
                    path[0]
                };
                let far_cell = if toward_hi { key.1 } else { key.0 };
                let next_ctx = if next == far_rep {
                    Ctx::AtGrid(far_cell)
                } else {
                    Ctx::OnPath { key, toward_hi }
                };
                Ok((next, next_ctx))
            }
        }
    }

    /// Grid decisions at a representative; same-representative grid moves
    /// cost no hops and are resolved in place.
    fn grid_decision(
        &self,
        v: NodeId,
        mut cell: CellCoord,
        t: &RoutingLabel,
        grid_cells: &mut Vec<CellCoord>,
    ) -> Result<(NodeId, Ctx), RoutingError> {
        loop {
            grid_cells.push(cell);
            let state = &self.states[&cell];
            match rho_gamma(state, t, cell)? {
                GridStep::Arrived => {
                    // The target lives in this cell and is adjacent to its
                    // representative; direct delivery should have fired.
                    return Err(RoutingError::DeliveryFailed { at: cell });
                }
                GridStep::Move(d) => {
                    let (di, dj) = d.offset();
                    let nb = cell.offset(di, dj);
                    if self.build.rep_of[&nb] == v {
                        cell = nb;
                        continue;
                    }
                    let key = edge_key(cell, nb);
                    let path = &self.build.edge_paths[&key];
                    let toward_hi = nb == key.1;
                    let next = if toward_hi { path[1] } else { path[path.len() - 2] };
                    let far_rep = if toward_hi {
                        *path.last().unwrap()
                    } else {
                        path[0]
                    };
                    let next_ctx = if next == far_rep {
                        Ctx::AtGrid(nb)
                    } else {
                        Ctx::OnPath { key, toward_hi }
                    };
                    return Ok((next, next_ctx));
                }
            }
        }
    }

    /// The representative path for the grid walk from `s`'s cell to `t`'s:
    /// source, then the edge paths of consecutive grid steps with
    /// duplicate representatives merged, then target. This is the oracle
    /// the routed path must equal.
    pub fn representative_path(&self, s: NodeId, t: NodeId) -> Result<Vec<NodeId>, RoutingError> {
        let label = self.make_label(t)?;
        let s_idx = self.inst.idx_of(s).ok_or(RoutingError::UnknownNode { id: s })?;
        let s_cell = cell_of(self.inst.pt(s_idx));
        if !self.labels.contains_key(&s_cell) {
            return Err(RoutingError::InactiveCell { id: s });
        }
        let cells = grid_walk(&self.states, s_cell, &label)?;
        let mut out = vec![s];
        let push = |id: NodeId, out: &mut Vec<NodeId>| {
            if *out.last().unwrap() != id {
                out.push(id);
            }
        };
        for w in cells.windows(2) {
            let key = edge_key(w[0], w[1]);
            let a = self.build.rep_of[&w[0]];
            let b = self.build.rep_of[&w[1]];
            if a == b {
                push(a, &mut out);
                continue;
            }
            let path = &self.build.edge_paths[&key];
            if w[1] == key.1 {
                for &id in path {
                    push(id, &mut out);
                }
            } else {
                for &id in path.iter().rev() {
                    push(id, &mut out);
                }
            }
        }
        push(self.build.rep_of[cells.last().unwrap()], &mut out);
        push(t, &mut out);
        Ok(out)
    }
}
