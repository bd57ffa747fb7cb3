//! Construction of graph paths realizing grid edges.
//!
//! Two adjacent active cells induce a grid edge; its representatives lie
//! within three hops of each other in the graph. The protocol materializes
//! one concrete path per grid edge and leaves next-hop state at every node
//! on it, so later phases can relay grid-level messages through the graph.
//!
//! Phase one (three rounds) is a synchronous wave from all representatives.
//! A representative announces itself with the sorted list of cells it won;
//! every node remembers, per announcing root, its distance, the cells, and a
//! parent pointer (the smallest-id neighbor that delivered the announcement
//! first), and forwards announcements up to distance three.
//!
//! Phase two (three rounds) connects edge endpoints. For each grid edge
//! whose cells have distinct representatives, the smaller-id representative
//! sends a join toward the other along parent pointers; every hop records
//! the next hop in both directions, and the target learns the full path.
//! Messages are broadcast with an explicit receiver tag, so the protocol is
//! identical under unicast and broadcast local channels.

use std::collections::BTreeMap;

use crate::geometry::{CellCoord, NodeId};
use crate::sim::{Message, NodeCtx, NodeProgram, Outbox, Word};

/// Grid edge key: cell pair in lexicographic order.
pub type EdgeKey = (CellCoord, CellCoord);

/// Normalizes a cell pair into an [`EdgeKey`].
pub fn edge_key(a: CellCoord, b: CellCoord) -> EdgeKey {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Wave depth up to which announcements are forwarded.
const MAX_DEPTH: i64 = 3;

/// Number of broadcast rounds of each phase.
pub const WAVE_ROUNDS: u64 = 3;
pub const JOIN_ROUNDS: u64 = 3;

const TAG_WAVE: i64 = 1;
const TAG_JOIN: i64 = 2;

#[derive(Clone, Debug)]
struct RootInfo {
    parent: NodeId,
    cells: Vec<CellCoord>,
}

#[derive(Clone, Debug)]
struct JoinMsg {
    next_hop: NodeId,
    target: NodeId,
    key: EdgeKey,
    toward_hi: bool,
    path: Vec<NodeId>,
}

/// Per-node program for path construction.
pub struct PathProgram {
    id: NodeId,
    /// Cells this node won in the election; empty for non-representatives.
    my_cells: Vec<CellCoord>,
    heard: BTreeMap<NodeId, RootInfo>,
    wave_queue: Vec<(NodeId, i64, Vec<CellCoord>)>,
    join_queue: Vec<JoinMsg>,
    /// Next hop on an edge path; the flag tells whether the packet moves
    /// toward the representative of the higher cell of the key.
    next_hop: BTreeMap<(EdgeKey, bool), NodeId>,
    /// Full paths of edges this node terminates (from the initiating
    /// representative to this one).
    completed: BTreeMap<EdgeKey, Vec<NodeId>>,
    /// Grid edges with both endpoints represented by this node.
    internal: Vec<EdgeKey>,
    /// Edges this node should have joined but could not (no wave heard).
    pub failed: Vec<EdgeKey>,
    rounds_seen: u64,
}

impl PathProgram {
    pub fn new(id: NodeId, my_cells: Vec<CellCoord>) -> Self {
        PathProgram {
            id,
            my_cells,
            heard: BTreeMap::new(),
            wave_queue: Vec::new(),
            join_queue: Vec::new(),
            next_hop: BTreeMap::new(),
            completed: BTreeMap::new(),
            internal: Vec::new(),
            failed: Vec::new(),
            rounds_seen: 0,
        }
    }

    pub fn next_hops(&self) -> &BTreeMap<(EdgeKey, bool), NodeId> {
        &self.next_hop
    }

    pub fn completed_paths(&self) -> &BTreeMap<EdgeKey, Vec<NodeId>> {
        &self.completed
    }

    pub fn internal_edges(&self) -> &[EdgeKey] {
        &self.internal
    }

    fn absorb_waves(&mut self, inbox: &[Message]) {
        // Collect first-time roots this round; the parent is the smallest
        // sender id among the copies delivered together.
        let mut fresh: BTreeMap<NodeId, (i64, NodeId, Vec<CellCoord>)> = BTreeMap::new();
        for m in inbox {
            let mut w = m.payload.iter();
            while let Some(first) = w.next() {
                match first.as_int() {
                    Some(TAG_WAVE) => {
                        let root = w.next().and_then(Word::as_id).unwrap();
                        let depth = w.next().and_then(Word::as_int).unwrap();
                        let k = w.next().and_then(Word::as_int).unwrap() as usize;
                        let cells: Vec<CellCoord> =
                            (0..k).map(|_| w.next().and_then(Word::as_cell).unwrap()).collect();
                        if root == self.id || self.heard.contains_key(&root) {
                            continue;
                        }
                        let dist = depth + 1;
                        match fresh.get_mut(&root) {
                            Some(e) => e.1 = e.1.min(m.src),
                            None => {
                                fresh.insert(root, (dist, m.src, cells));
                            }
                        }
                    }
                    Some(TAG_JOIN) => {
                        // Skip a join tuple; handled in absorb_joins.
                        for _ in 0..5 {
                            w.next();
                        }
                        let len = w.next().and_then(Word::as_int).unwrap() as usize;
                        for _ in 0..len {
                            w.next();
                        }
                    }
                    _ => break,
                }
            }
        }
        for (root, (dist, parent, cells)) in fresh {
            self.heard.insert(
                root,
                RootInfo {
                    parent,
                    cells: cells.clone(),
                },
            );
            if dist < MAX_DEPTH {
                self.wave_queue.push((root, dist, cells));
            }
        }
    }

    fn absorb_joins(&mut self, inbox: &[Message]) {
        for m in inbox {
            let mut w = m.payload.iter();
            while let Some(first) = w.next() {
                match first.as_int() {
                    Some(TAG_WAVE) => {
                        for _ in 0..2 {
                            w.next();
                        }
                        let k = w.next().and_then(Word::as_int).unwrap() as usize;
                        for _ in 0..k {
                            w.next();
                        }
                    }
                    Some(TAG_JOIN) => {
                        let next_hop = w.next().and_then(Word::as_id).unwrap();
                        let target = w.next().and_then(Word::as_id).unwrap();
                        let lo = w.next().and_then(Word::as_cell).unwrap();
                        let hi = w.next().and_then(Word::as_cell).unwrap();
                        let toward_hi = w.next().and_then(Word::as_int).unwrap() != 0;
                        let len = w.next().and_then(Word::as_int).unwrap() as usize;
                        let path: Vec<NodeId> =
                            (0..len).map(|_| w.next().and_then(Word::as_id).unwrap()).collect();
                        if next_hop != self.id {
                            continue;
                        }
                        let key = (lo, hi);
                        let prev = *path.last().unwrap();
                        if target == self.id {
                            self.next_hop.insert((key, !toward_hi), prev);
                            let mut full = path;
                            full.push(self.id);
                            self.completed.insert(key, full);
                        } else {
                            // Relay: remember both directions and forward
                            // along the parent pointer toward the target.
                            self.next_hop.insert((key, !toward_hi), prev);
                            let parent = self.heard.get(&target).map(|r| r.parent);
                            match parent {
                                Some(p) => {
                                    self.next_hop.insert((key, toward_hi), p);
                                    let mut fwd = path;
                                    fwd.push(self.id);
                                    self.join_queue.push(JoinMsg {
                                        next_hop: p,
                                        target,
                                        key,
                                        toward_hi,
                                        path: fwd,
                                    });
                                }
                                None => self.failed.push(key),
                            }
                        }
                    }
                    _ => break,
                }
            }
        }
    }

    /// Grid edges incident to this node's cells, resolved against the roots
    /// heard during the wave. Called once after the wave settles.
    fn initiate_joins(&mut self) {
        let mut cell_root: BTreeMap<CellCoord, NodeId> = BTreeMap::new();
        for &c in &self.my_cells {
            cell_root.insert(c, self.id);
        }
        for (&root, info) in &self.heard {
            for &c in &info.cells {
                cell_root.insert(c, root);
            }
        }
        let mut seen_internal: BTreeMap<EdgeKey, ()> = BTreeMap::new();
        for &cell in &self.my_cells {
            for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let other = cell.offset(di, dj);
                let Some(&root) = cell_root.get(&other) else {
                    continue;
                };
                let key = edge_key(cell, other);
                if root == self.id {
                    if seen_internal.insert(key, ()).is_none() {
                        self.internal.push(key);
                    }
                    continue;
                }
                if self.id < root {
                    let toward_hi = other == key.1;
                    match self.heard.get(&root) {
                        Some(info) => {
                            self.next_hop.insert((key, toward_hi), info.parent);
                            self.join_queue.push(JoinMsg {
                                next_hop: info.parent,
                                target: root,
                                key,
                                toward_hi,
                                path: vec![self.id],
                            });
                        }
                        None => self.failed.push(key),
                    }
                }
            }
        }
    }

    fn flush(&mut self, out: &mut Outbox) {
        if self.wave_queue.is_empty() && self.join_queue.is_empty() {
            return;
        }
        let mut words = Vec::new();
        for (root, depth, cells) in self.wave_queue.drain(..) {
            words.push(Word::Int(TAG_WAVE));
            words.push(Word::Id(root));
            words.push(Word::Int(depth));
            words.push(Word::Int(cells.len() as i64));
            words.extend(cells.into_iter().map(Word::Cell));
        }
        for j in self.join_queue.drain(..) {
            words.push(Word::Int(TAG_JOIN));
            words.push(Word::Id(j.next_hop));
            words.push(Word::Id(j.target));
            words.push(Word::Cell(j.key.0));
            words.push(Word::Cell(j.key.1));
            words.push(Word::Int(j.toward_hi as i64));
            words.push(Word::Int(j.path.len() as i64));
            words.extend(j.path.into_iter().map(Word::Id));
        }
        out.broadcast_local(words);
    }
}

impl NodeProgram for PathProgram {
    fn on_round(&mut self, _ctx: &NodeCtx, inbox: &[Message], out: &mut Outbox) {
        self.absorb_waves(inbox);
        self.absorb_joins(inbox);
        if self.rounds_seen == 0 && !self.my_cells.is_empty() {
            self.wave_queue
                .push((self.id, 0, self.my_cells.clone()));
        }
        if self.rounds_seen == WAVE_ROUNDS {
            self.initiate_joins();
        }
        self.flush(out);
        self.rounds_seen += 1;
    }

    fn idle(&self) -> bool {
        self.rounds_seen > WAVE_ROUNDS
            && self.wave_queue.is_empty()
            && self.join_queue.is_empty()
    }
}
