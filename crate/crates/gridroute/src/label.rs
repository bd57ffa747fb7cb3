//! Distributed computation of the interval labelling on the grid network.
//!
//! Programs here run on a network whose nodes are the virtual ids of grid
//! nodes and whose local edges are the grid edges. The labelling proceeds in
//! stages, each a self-contained protocol run to quiescence:
//!
//! 1. *tree*: three local rounds fix the spanning tree (west-edge rule) and
//!    exchange slot indices, after which every node knows the Euler tour
//!    successor of each of its slots.
//! 2. *ring*: pointer doubling around the Euler tour ring aggregates the
//!    minimum virtual id; its owner's slot 0 becomes the tour start.
//! 3. *line*: doubling pointers are rebuilt on the tour cut at the start
//!    slot (they stop at the line end instead of wrapping), then position
//!    claims propagate from the start; a slot's first claim is its exact
//!    line position.
//! 4. *rank*: the same pointers aggregate first-visit flags, and claims
//!    deliver prefix counts; a node derives its preorder number from its
//!    first slot and its subtree bound from its last slot.
//! 5. *portal*: directional doubling along each portal aggregates the
//!    member with the smallest preorder number, whose interval becomes the
//!    portal interval.
//! 6. *exchange*: one local round shares the finished labels with grid
//!    neighbors.
//!
//! All doubling traffic uses the global channel and respects the per-round
//! send budget through an explicit drain queue; protocols are monotone, so
//! delayed sends never change the result. The outcome must equal the
//! centralized labelling exactly; tests enforce that.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::geometry::{CellCoord, UdgInstance};
use crate::grid::adapter::{AdapterConfig, AdapterError, GridRoundAdapter};
use crate::grid::GridBuild;
use crate::portal::NodeLabel;
use crate::sim::{
    LocalMode, Message, NodeCtx, NodeProgram, Outbox, SimConfig, SimError, SimNetwork, Word,
};

/// Message size for labelling networks, in words. Per-destination records
/// are combined into single messages; this bound holds their worst-case sum.
pub const LABEL_W_MAX: usize = 4096;

/// Round cap per labelling stage on a grid of `n` nodes.
pub fn stage_cap(n: usize) -> u64 {
    12 * (n.max(2) as f64).log2().ceil() as u64 + 20
}

/// Errors from the distributed labelling.
#[derive(Debug, Error)]
pub enum LabelError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error("labelling stage {stage} exceeded its round cap of {cap}")]
    StageCap { stage: &'static str, cap: u64 },
    #[error("labelling produced inconsistent state: {0}")]
    Inconsistent(String),
}

const TAG_HAS_WEST: i64 = 1;
const TAG_DECIDE: i64 = 2;
const TAG_SLOT: i64 = 3;
const TAG_REQ: i64 = 4;
const TAG_REP: i64 = 5;
const TAG_CLAIM: i64 = 6;
const TAG_LABEL: i64 = 7;

const STAGE_RING: i64 = 1;
const STAGE_LINE: i64 = 2;
const STAGE_RANK: i64 = 3;
const STAGE_PORTAL_N: i64 = 4;
const STAGE_PORTAL_S: i64 = 5;

/// Directions indexed N, E, S, W.
const DIRS: [(i64, i64); 4] = [(0, 1), (1, 0), (0, -1), (-1, 0)];
const NORTH: usize = 0;
const EAST: usize = 1;
const SOUTH: usize = 2;
const WEST: usize = 3;

/// Budget-respecting sender: accumulates records per destination and emits
/// at most `budget` combined messages per round.
#[derive(Default)]
struct DrainQueue {
    records: BTreeMap<u64, VecDeque<Vec<Word>>>,
}

impl DrainQueue {
    fn push(&mut self, dst: u64, record: Vec<Word>) {
        self.records.entry(dst).or_default().push_back(record);
    }

    fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn drain(&mut self, ctx: &NodeCtx, out: &mut Outbox) {
        let mut allowance = ctx.global_budget;
        let mut exhausted = Vec::new();
        for (&dst, queue) in self.records.iter_mut() {
            while allowance > 0 && !queue.is_empty() {
                let mut words = Vec::new();
                while let Some(front) = queue.front() {
                    if !words.is_empty() && words.len() + front.len() > LABEL_W_MAX {
                        break;
                    }
                    words.extend(queue.pop_front().unwrap());
                }
                out.send_global(dst, words);
                allowance -= 1;
            }
            if queue.is_empty() {
                exhausted.push(dst);
            }
            if allowance == 0 {
                break;
            }
        }
        for dst in exhausted {
            self.records.remove(&dst);
        }
    }
}

/// Splits a payload into records (each record starts with a known tag).
fn records(payload: &[Word]) -> Vec<&[Word]> {
    let mut out = Vec::new();
    let mut rest = payload;
    while let Some(Word::Int(tag)) = rest.first() {
        let len = match *tag {
            TAG_HAS_WEST | TAG_DECIDE => 2,
            TAG_SLOT => 3,
            TAG_REQ => 5,
            TAG_REP => 8,
            TAG_CLAIM => 4,
            TAG_LABEL => 5,
            _ => break,
        };
        if rest.len() < len {
            break;
        }
        out.push(&rest[..len]);
        rest = &rest[len..];
    }
    out
}

fn int(w: Word) -> i64 {
    w.as_int().expect("integer word")
}

// ---------------------------------------------------------------------------
// Stage 1: spanning tree and slot exchange.

/// Per-node view of the grid needed to start labelling: own cell and the
/// virtual ids of the active 4-neighbors.
#[derive(Clone, Debug)]
pub struct GridSeat {
    pub vid: u64,
    pub cell: CellCoord,
    /// Neighbor vids indexed N, E, S, W.
    pub dirs: [Option<u64>; 4],
}

/// Result of the tree stage for one node.
#[derive(Clone, Debug)]
pub struct SlotView {
    /// Tree neighbors ascending by vid.
    pub tree_neighbors: Vec<u64>,
    /// Euler successor of each own slot (`sid = vid * 4 + index`).
    pub succ: Vec<u64>,
}

pub struct TreeSlotsProgram {
    seat: GridSeat,
    rounds_seen: u64,
    south_has_west: Option<bool>,
    neighbor_decides: BTreeMap<u64, bool>,
    tree_neighbors: Vec<u64>,
    /// From each tree neighbor: (index of this node in theirs, their degree).
    slot_info: BTreeMap<u64, (usize, usize)>,
    pub view: Option<SlotView>,
}

impl TreeSlotsProgram {
    pub fn new(seat: GridSeat) -> Self {
        TreeSlotsProgram {
            seat,
            rounds_seen: 0,
            south_has_west: None,
            neighbor_decides: BTreeMap::new(),
            tree_neighbors: Vec::new(),
            slot_info: BTreeMap::new(),
            view: None,
        }
    }

    fn finish(&mut self) {
        let deg = self.tree_neighbors.len();
        let mut succ = Vec::with_capacity(deg);
        for j in 0..deg {
            let v = self.tree_neighbors[j];
            let (idx_me, deg_v) = self.slot_info[&v];
            let i = (idx_me + deg_v - 1) % deg_v;
            succ.push(v * 4 + i as u64);
        }
        self.view = Some(SlotView {
            tree_neighbors: self.tree_neighbors.clone(),
            succ,
        });
    }
}

impl NodeProgram for TreeSlotsProgram {
    fn on_round(&mut self, _ctx: &NodeCtx, inbox: &[Message], out: &mut Outbox) {
        for m in inbox {
            for r in records(&m.payload) {
                match int(r[0]) {
                    TAG_HAS_WEST => {
                        if Some(m.src) == self.seat.dirs[SOUTH] {
                            self.south_has_west = Some(int(r[1]) != 0);
                        }
                    }
                    TAG_DECIDE => {
                        self.neighbor_decides.insert(m.src, int(r[1]) != 0);
                    }
                    TAG_SLOT => {
                        self.slot_info
                            .insert(m.src, (int(r[1]) as usize, int(r[2]) as usize));
                    }
                    _ => {}
                }
            }
        }
        match self.rounds_seen {
            0 => {
                let has_west = self.seat.dirs[WEST].is_some();
                for d in self.seat.dirs.iter().flatten() {
                    out.send_local(*d, vec![Word::Int(TAG_HAS_WEST), Word::Int(has_west as i64)]);
                }
            }
            1 => {
                // West edge joins the tree when the southern neighbor is
                // missing or has no western grid edge.
                let add_west = self_decides_west(&self.seat, self.south_has_west);
                for d in self.seat.dirs.iter().flatten() {
                    out.send_local(*d, vec![Word::Int(TAG_DECIDE), Word::Int(add_west as i64)]);
                }
            }
            2 => {
                let mut tn = Vec::new();
                if let Some(n) = self.seat.dirs[NORTH] {
                    tn.push(n);
                }
                if let Some(s) = self.seat.dirs[SOUTH] {
                    tn.push(s);
                }
                if let Some(w) = self.seat.dirs[WEST] {
                    if self_decides_west(&self.seat, self.south_has_west) {
                        tn.push(w);
                    }
                }
                if let Some(e) = self.seat.dirs[EAST] {
                    if self.neighbor_decides.get(&e).copied() == Some(true) {
                        tn.push(e);
                    }
                }
                tn.sort_unstable();
                self.tree_neighbors = tn;
                let deg = self.tree_neighbors.len();
                for (idx, &v) in self.tree_neighbors.iter().enumerate() {
                    out.send_local(
                        v,
                        vec![
                            Word::Int(TAG_SLOT),
                            Word::Int(idx as i64),
                            Word::Int(deg as i64),
                        ],
                    );
                }
            }
            3 => self.finish(),
            _ => {}
        }
        self.rounds_seen += 1;
    }

    fn idle(&self) -> bool {
        self.rounds_seen > 3
    }
}

fn self_decides_west(seat: &GridSeat, south_has_west: Option<bool>) -> bool {
    seat.dirs[WEST].is_some()
        && match seat.dirs[SOUTH] {
            None => true,
            Some(_) => !south_has_west.unwrap_or(false),
        }
}

// ---------------------------------------------------------------------------
// Doubling core shared by the ring, line, rank, and portal stages.

#[derive(Clone, Copy, Debug)]
struct Level {
    ptr: Option<u64>,
    /// Network node owning `ptr`.
    owner: Option<u64>,
    a: i64,
    b: i64,
}

#[derive(Clone, Copy)]
enum Combine {
    /// Keep the smaller annotation (compared as a pair), follow the pointer.
    MinPair,
    /// Pointer structure only; annotations unused.
    PtrOnly,
    /// Sum annotations along preset pointers.
    SumPreset,
}

/// Event-driven pointer doubling over entities owned by this node. Entities
/// advance one level at a time: a request to the current pointer's owner
/// returns that entity's same-level data, which yields the next level.
struct Doubling {
    stage: i64,
    combine: Combine,
    k_max: usize,
    /// Own entities: levels known so far (index = level).
    ent: BTreeMap<u64, Vec<Level>>,
    /// Preset pointers per own entity and level (SumPreset only).
    preset: BTreeMap<u64, Vec<Level>>,
    /// Requests waiting for an own entity to reach a level.
    pending: BTreeMap<(usize, u64), Vec<(u64, u64)>>,
    requested: BTreeSet<(usize, u64)>,
}

impl Doubling {
    fn new(stage: i64, combine: Combine, k_max: usize) -> Self {
        Doubling {
            stage,
            combine,
            k_max,
            ent: BTreeMap::new(),
            preset: BTreeMap::new(),
            pending: BTreeMap::new(),
            requested: BTreeSet::new(),
        }
    }

    fn seed(&mut self, entity: u64, level0: Level) {
        self.ent.insert(entity, vec![level0]);
    }

    fn seed_preset(&mut self, entity: u64, levels: Vec<Level>) {
        self.preset.insert(entity, levels);
    }

    fn level(&self, entity: u64, k: usize) -> Option<&Level> {
        self.ent.get(&entity).and_then(|l| l.get(k))
    }

    fn top(&self, entity: u64) -> &Level {
        self.ent[&entity].last().unwrap()
    }

    fn complete(&self) -> bool {
        self.ent.values().all(|l| l.len() > self.k_max)
    }

    /// Advances entities locally (capped pointers need no communication)
    /// and emits requests and due replies.
    fn pump(&mut self, queue: &mut DrainQueue) {
        loop {
            let mut progressed = false;
            let entities: Vec<u64> = self.ent.keys().cloned().collect();
            for e in entities {
                let k = self.ent[&e].len() - 1;
                if k >= self.k_max {
                    continue;
                }
                let cur = *self.ent[&e].last().unwrap();
                match cur.ptr {
                    None => {
                        // Capped: next level is identical.
                        let next = match self.combine {
                            Combine::SumPreset => self.preset_level(e, k + 1, cur.a),
                            _ => cur,
                        };
                        self.ent.get_mut(&e).unwrap().push(next);
                        self.on_level_reached(e, k + 1, queue);
                        progressed = true;
                    }
                    Some(ptr) => {
                        if self.requested.insert((k, e)) {
                            let owner = cur.owner.expect("pointer with owner");
                            queue.push(
                                owner,
                                vec![
                                    Word::Int(TAG_REQ),
                                    Word::Int(self.stage),
                                    Word::Int(k as i64),
                                    Word::Int(e as i64),
                                    Word::Int(ptr as i64),
                                ],
                            );
                        }
                    }
                }
            }
            if !progressed {
                break;
            }
        }
    }

    fn preset_level(&self, entity: u64, k: usize, a: i64) -> Level {
        let p = self.preset[&entity][k];
        Level {
            ptr: p.ptr,
            owner: p.owner,
            a,
            b: 0,
        }
    }

    fn on_level_reached(&mut self, entity: u64, k: usize, queue: &mut DrainQueue) {
        if let Some(waiters) = self.pending.remove(&(k, entity)) {
            for (req_entity, req_owner) in waiters {
                self.reply(entity, k, req_entity, req_owner, queue);
            }
        }
    }

    fn reply(&self, entity: u64, k: usize, req_entity: u64, req_owner: u64, queue: &mut DrainQueue) {
        let lvl = self.ent[&entity][k];
        let (ptr_w, owner_w) = match (lvl.ptr, lvl.owner) {
            (Some(p), Some(o)) => (Word::Int(p as i64), Word::Id(o)),
            _ => (Word::Int(-1), Word::Int(-1)),
        };
        queue.push(
            req_owner,
            vec![
                Word::Int(TAG_REP),
                Word::Int(self.stage),
                Word::Int(k as i64),
                Word::Int(req_entity as i64),
                ptr_w,
                owner_w,
                Word::Int(lvl.a),
                Word::Int(lvl.b),
            ],
        );
    }

    /// Handles one request record addressed to an own entity.
    fn on_req(&mut self, k: usize, req_entity: u64, target: u64, req_owner: u64, queue: &mut DrainQueue) {
        if self.ent.get(&target).map_or(0, |l| l.len()) > k {
            self.reply(target, k, req_entity, req_owner, queue);
        } else {
            self.pending
                .entry((k, target))
                .or_default()
                .push((req_entity, req_owner));
        }
    }

    /// Handles one reply for an own entity: builds level `k + 1`.
    fn on_rep(&mut self, k: usize, entity: u64, ptr: Option<u64>, owner: Option<u64>, a: i64, b: i64, queue: &mut DrainQueue) {
        if self.ent.get(&entity).map_or(0, |l| l.len()) != k + 1 {
            return; // stale or duplicate
        }
        let cur = *self.ent[&entity].last().unwrap();
        let next = match self.combine {
            Combine::MinPair => {
                if (a, b) < (cur.a, cur.b) {
                    Level { ptr, owner, a, b }
                } else {
                    Level {
                        ptr,
                        owner,
                        a: cur.a,
                        b: cur.b,
                    }
                }
            }
            Combine::PtrOnly => Level {
                ptr,
                owner,
                a: 0,
                b: 0,
            },
            Combine::SumPreset => self.preset_level(entity, k + 1, cur.a + a),
        };
        self.ent.get_mut(&entity).unwrap().push(next);
        self.on_level_reached(entity, k + 1, queue);
    }
}

/// First-claim-final value propagation along doubling pointers.
struct Claims {
    stage: i64,
    /// Own entities: claimed value once known.
    value: BTreeMap<u64, Option<i64>>,
    emitted: BTreeSet<(usize, u64)>,
}

impl Claims {
    fn new(stage: i64, entities: impl Iterator<Item = u64>) -> Self {
        Claims {
            stage,
            value: entities.map(|e| (e, None)).collect(),
            emitted: BTreeSet::new(),
        }
    }

    fn set(&mut self, entity: u64, v: i64) {
        let slot = self.value.get_mut(&entity).expect("own entity");
        if slot.is_none() {
            *slot = Some(v);
        }
    }

    /// Emits claims for every (entity, level) whose pointer and value are
    /// both known. `delta(entity, level)` is the claimed increment.
    fn pump(
        &mut self,
        doubling: &Doubling,
        queue: &mut DrainQueue,
        delta: impl Fn(u64, usize) -> i64,
    ) {
        for (&e, val) in &self.value {
            let Some(v) = *val else { continue };
            let Some(levels) = doubling.ent.get(&e) else {
                continue;
            };
            for (k, lvl) in levels.iter().enumerate() {
                if k >= doubling.k_max {
                    break;
                }
                if let (Some(ptr), Some(owner)) = (lvl.ptr, lvl.owner) {
                    if self.emitted.insert((k, e)) {
                        queue.push(
                            owner,
                            vec![
                                Word::Int(TAG_CLAIM),
                                Word::Int(self.stage),
                                Word::Int(ptr as i64),
                                Word::Int(v + delta(e, k)),
                            ],
                        );
                    }
                }
            }
        }
    }

    fn all_known(&self) -> bool {
        self.value.values().all(|v| v.is_some())
    }
}

// ---------------------------------------------------------------------------
// Stage 2: ring minimum (rooting).

pub struct RingProgram {
    slots: Vec<u64>,
    doubling: Doubling,
    queue: DrainQueue,
}

impl RingProgram {
    pub fn new(vid: u64, view: &SlotView, n: usize) -> Self {
        let k_max = k_for(2 * n);
        let mut doubling = Doubling::new(STAGE_RING, Combine::MinPair, k_max);
        let mut slots = Vec::new();
        for (i, &succ) in view.succ.iter().enumerate() {
            let sid = vid * 4 + i as u64;
            slots.push(sid);
            doubling.seed(
                sid,
                Level {
                    ptr: Some(succ),
                    owner: Some(succ / 4),
                    a: vid as i64,
                    b: 0,
                },
            );
        }
        RingProgram {
            slots,
            doubling,
            queue: DrainQueue::default(),
        }
    }

    /// Minimum vid on the ring, once complete and agreed by all own slots.
    pub fn root(&self) -> Option<u64> {
        if !self.doubling.complete() {
            return None;
        }
        let mins: BTreeSet<i64> = self
            .slots
            .iter()
            .map(|&s| self.doubling.top(s).a)
            .collect();
        if mins.len() == 1 {
            Some(*mins.first().unwrap() as u64)
        } else {
            None
        }
    }
}

/// Smallest k with 2^k >= span.
fn k_for(span: usize) -> usize {
    let mut k = 0;
    while (1usize << k) < span.max(2) {
        k += 1;
    }
    k
}

fn dispatch_doubling(doubling: &mut Doubling, inbox: &[Message], queue: &mut DrainQueue) {
    for m in inbox {
        for r in records(&m.payload) {
            match int(r[0]) {
                TAG_REQ if int(r[1]) == doubling.stage => {
                    doubling.on_req(
                        int(r[2]) as usize,
                        int(r[3]) as u64,
                        int(r[4]) as u64,
                        m.src,
                        queue,
                    );
                }
                TAG_REP if int(r[1]) == doubling.stage => {
                    let (ptr, owner) = match (r[4], r[5]) {
                        (Word::Int(p), Word::Id(o)) if p >= 0 => (Some(p as u64), Some(o)),
                        _ => (None, None),
                    };
                    doubling.on_rep(
                        int(r[2]) as usize,
                        int(r[3]) as u64,
                        ptr,
                        owner,
                        int(r[6]),
                        int(r[7]),
                        queue,
                    );
                }
                _ => {}
            }
        }
    }
}

impl NodeProgram for RingProgram {
    fn on_round(&mut self, ctx: &NodeCtx, inbox: &[Message], out: &mut Outbox) {
        dispatch_doubling(&mut self.doubling, inbox, &mut self.queue);
        self.doubling.pump(&mut self.queue);
        self.queue.drain(ctx, out);
    }

    fn idle(&self) -> bool {
        self.queue.is_empty() && self.doubling.complete()
    }
}

// ---------------------------------------------------------------------------
// Stage 3: line pointers and positions.

pub struct LineProgram {
    start_slot: u64,
    doubling: Doubling,
    claims: Claims,
    queue: DrainQueue,
}

impl LineProgram {
    pub fn new(vid: u64, view: &SlotView, root: u64, n: usize) -> Self {
        let k_max = k_for(2 * n);
        let start_slot = root * 4;
        let mut doubling = Doubling::new(STAGE_LINE, Combine::PtrOnly, k_max);
        let mut slots = Vec::new();
        for (i, &succ) in view.succ.iter().enumerate() {
            let sid = vid * 4 + i as u64;
            slots.push(sid);
            // The tour edge into the start slot is cut; its source is the
            // line end and gets no pointer.
            let (ptr, owner) = if succ == start_slot {
                (None, None)
            } else {
                (Some(succ), Some(succ / 4))
            };
            doubling.seed(
                sid,
                Level {
                    ptr,
                    owner,
                    a: 0,
                    b: 0,
                },
            );
        }
        let mut claims = Claims::new(STAGE_LINE, slots.iter().cloned());
        if vid == root {
            claims.set(start_slot, 0);
        }
        LineProgram {
            start_slot,
            doubling,
            claims,
            queue: DrainQueue::default(),
        }
    }

    /// Line position of each own slot, once known.
    pub fn positions(&self) -> Option<BTreeMap<u64, u64>> {
        if !self.claims.all_known() {
            return None;
        }
        Some(
            self.claims
                .value
                .iter()
                .map(|(&s, v)| (s, v.unwrap() as u64))
                .collect(),
        )
    }

    /// Line pointer levels per own slot, for reuse by the rank stage.
    pub fn pointer_levels(&self, slot: u64) -> Vec<Level0> {
        self.doubling.ent[&slot]
            .iter()
            .map(|l| Level0 {
                ptr: l.ptr,
                owner: l.owner,
            })
            .collect()
    }

    fn handle_claims(&mut self, inbox: &[Message]) {
        for m in inbox {
            for r in records(&m.payload) {
                if int(r[0]) == TAG_CLAIM && int(r[1]) == STAGE_LINE {
                    let entity = int(r[2]) as u64;
                    if entity != self.start_slot {
                        self.claims.set(entity, int(r[3]));
                    }
                }
            }
        }
    }
}

/// Pointer-only view of a doubling level.
#[derive(Clone, Copy, Debug)]
pub struct Level0 {
    pub ptr: Option<u64>,
    pub owner: Option<u64>,
}

impl NodeProgram for LineProgram {
    fn on_round(&mut self, ctx: &NodeCtx, inbox: &[Message], out: &mut Outbox) {
        dispatch_doubling(&mut self.doubling, inbox, &mut self.queue);
        self.handle_claims(inbox);
        self.doubling.pump(&mut self.queue);
        self.claims
            .pump(&self.doubling, &mut self.queue, |_, k| 1i64 << k);
        self.queue.drain(ctx, out);
    }

    fn idle(&self) -> bool {
        self.queue.is_empty() && self.doubling.complete() && self.claims.all_known()
    }
}

// ---------------------------------------------------------------------------
// Stage 4: first-visit prefix ranks.

pub struct RankProgram {
    start_slot: u64,
    doubling: Doubling,
    claims: Claims,
    queue: DrainQueue,
    /// Weight (first-visit flag) per own slot.
    weights: BTreeMap<u64, i64>,
}

impl RankProgram {
    /// `slots` carries per own slot: (sid, pointer levels, first-visit flag).
    pub fn new(slots: &[(u64, Vec<Level0>, bool)], root: u64, n: usize) -> Self {
        let k_max = k_for(2 * n);
        let start_slot = root * 4;
        let mut doubling = Doubling::new(STAGE_RANK, Combine::SumPreset, k_max);
        let mut weights = BTreeMap::new();
        for (sid, levels, flag) in slots {
            let w = *flag as i64;
            weights.insert(*sid, w);
            let preset: Vec<Level> = levels
                .iter()
                .map(|l| Level {
                    ptr: l.ptr,
                    owner: l.owner,
                    a: 0,
                    b: 0,
                })
                .collect();
            doubling.seed_preset(*sid, preset.clone());
            doubling.seed(
                *sid,
                Level {
                    ptr: preset[0].ptr,
                    owner: preset[0].owner,
                    a: w,
                    b: 0,
                },
            );
        }
        let mut claims = Claims::new(STAGE_RANK, weights.keys().cloned());
        if weights.contains_key(&start_slot) {
            claims.set(start_slot, 0);
        }
        RankProgram {
            start_slot,
            doubling,
            claims,
            queue: DrainQueue::default(),
            weights,
        }
    }

    /// Exclusive prefix count of first visits before each own slot.
    pub fn prefixes(&self) -> Option<BTreeMap<u64, u64>> {
        if !self.claims.all_known() {
            return None;
        }
        Some(
            self.claims
                .value
                .iter()
                .map(|(&s, v)| (s, v.unwrap() as u64))
                .collect(),
        )
    }

    pub fn weight(&self, slot: u64) -> u64 {
        self.weights[&slot] as u64
    }
}

impl NodeProgram for RankProgram {
    fn on_round(&mut self, ctx: &NodeCtx, inbox: &[Message], out: &mut Outbox) {
        dispatch_doubling(&mut self.doubling, inbox, &mut self.queue);
        for m in inbox {
            for r in records(&m.payload) {
                if int(r[0]) == TAG_CLAIM && int(r[1]) == STAGE_RANK {
                    let entity = int(r[2]) as u64;
                    if entity != self.start_slot {
                        self.claims.set(entity, int(r[3]));
                    }
                }
            }
        }
        self.doubling.pump(&mut self.queue);
        let d = &self.doubling;
        self.claims.pump(d, &mut self.queue, |e, k| {
            d.level(e, k).map(|l| l.a).unwrap_or(0)
        });
        self.queue.drain(ctx, out);
    }

    fn idle(&self) -> bool {
        self.queue.is_empty() && self.doubling.complete() && self.claims.all_known()
    }
}

// ---------------------------------------------------------------------------
// Stage 5: portal minimum.

pub struct PortalProgram {
    vid: u64,
    north: Doubling,
    south: Doubling,
    queue: DrainQueue,
    own: (i64, i64),
}

impl PortalProgram {
    pub fn new(vid: u64, own: (u64, u64), north: Option<u64>, south: Option<u64>, n: usize) -> Self {
        let k_max = k_for(n.max(2));
        let own = (own.0 as i64, own.1 as i64);
        let mk = |stage, next: Option<u64>| {
            let mut d = Doubling::new(stage, Combine::MinPair, k_max);
            d.seed(
                vid,
                Level {
                    ptr: next,
                    owner: next,
                    a: own.0,
                    b: own.1,
                },
            );
            d
        };
        PortalProgram {
            vid,
            north: mk(STAGE_PORTAL_N, north),
            south: mk(STAGE_PORTAL_S, south),
            queue: DrainQueue::default(),
            own,
        }
    }

    /// Portal interval: the own/northward/southward minimum by preorder.
    pub fn portal_interval(&self) -> Option<(u64, u64)> {
        if !self.north.complete() || !self.south.complete() {
            return None;
        }
        let n = self.north.top(self.vid);
        let s = self.south.top(self.vid);
        let best = [(n.a, n.b), (s.a, s.b), self.own]
            .into_iter()
            .min()
            .unwrap();
        Some((best.0 as u64, best.1 as u64))
    }
}

impl NodeProgram for PortalProgram {
    fn on_round(&mut self, ctx: &NodeCtx, inbox: &[Message], out: &mut Outbox) {
        dispatch_doubling(&mut self.north, inbox, &mut self.queue);
        dispatch_doubling(&mut self.south, inbox, &mut self.queue);
        self.north.pump(&mut self.queue);
        self.south.pump(&mut self.queue);
        self.queue.drain(ctx, out);
    }

    fn idle(&self) -> bool {
        self.queue.is_empty() && self.north.complete() && self.south.complete()
    }
}

// ---------------------------------------------------------------------------
// Stage 6: label exchange with grid neighbors.

pub struct ExchangeProgram {
    seat: GridSeat,
    label: NodeLabel,
    rounds_seen: u64,
    pub neighbor_labels: [Option<NodeLabel>; 4],
}

impl ExchangeProgram {
    pub fn new(seat: GridSeat, label: NodeLabel) -> Self {
        ExchangeProgram {
            seat,
            label,
            rounds_seen: 0,
            neighbor_labels: [None; 4],
        }
    }
}

impl NodeProgram for ExchangeProgram {
    fn on_round(&mut self, _ctx: &NodeCtx, inbox: &[Message], out: &mut Outbox) {
        for m in inbox {
            for r in records(&m.payload) {
                if int(r[0]) == TAG_LABEL {
                    let lab = NodeLabel {
                        l: int(r[1]) as u64,
                        r: int(r[2]) as u64,
                        pl: int(r[3]) as u64,
                        pr: int(r[4]) as u64,
                    };
                    for (d, nb) in self.seat.dirs.iter().enumerate() {
                        if *nb == Some(m.src) {
                            self.neighbor_labels[d] = Some(lab);
                        }
                    }
                }
            }
        }
        if self.rounds_seen == 0 {
            for nb in self.seat.dirs.iter().flatten() {
                out.send_local(
                    *nb,
                    vec![
                        Word::Int(TAG_LABEL),
                        Word::Int(self.label.l as i64),
                        Word::Int(self.label.r as i64),
                        Word::Int(self.label.pl as i64),
                        Word::Int(self.label.pr as i64),
                    ],
                );
            }
        }
        self.rounds_seen += 1;
    }

    fn idle(&self) -> bool {
        self.rounds_seen > 0
    }
}

// ---------------------------------------------------------------------------
// Orchestration.

/// Result of the distributed labelling.
#[derive(Clone, Debug)]
pub struct Labelling {
    pub labels: BTreeMap<CellCoord, NodeLabel>,
    /// Each node's view of its grid neighbors' labels (N, E, S, W).
    pub neighbor_labels: BTreeMap<CellCoord, [Option<NodeLabel>; 4]>,
    /// Executed rounds per stage.
    pub stage_rounds: Vec<(&'static str, u64)>,
    pub round_cap: u64,
    pub trace: Option<String>,
}

/// Options for the labelling run.
#[derive(Clone, Debug, Default)]
pub struct LabelOptions {
    pub trace: bool,
}

fn seat_of(cell: CellCoord, vid_of_cell: &BTreeMap<CellCoord, u64>) -> GridSeat {
    let mut dirs = [None; 4];
    for (d, (di, dj)) in DIRS.iter().enumerate() {
        dirs[d] = vid_of_cell.get(&cell.offset(*di, *dj)).copied();
    }
    GridSeat {
        vid: vid_of_cell[&cell],
        cell,
        dirs,
    }
}

/// A network the staged protocols can run on: either the grid network
/// simulated directly, or the hosted grid where every round costs a
/// fixed window of unit-disk-graph rounds.
trait StageNet {
    fn drive<P: NodeProgram>(
        &mut self,
        programs: &mut [P],
        stage: &'static str,
        cap: u64,
    ) -> Result<u64, LabelError>;

    fn export_trace(&self) -> Option<String>;
}

impl StageNet for SimNetwork {
    fn drive<P: NodeProgram>(
        &mut self,
        programs: &mut [P],
        stage: &'static str,
        cap: u64,
    ) -> Result<u64, LabelError> {
        self.run_until(programs, cap, SimNetwork::quiescent)
            .map_err(|e| match e {
                SimError::RoundLimitExceeded { .. } => LabelError::StageCap { stage, cap },
                other => LabelError::Sim(other),
            })
    }

    fn export_trace(&self) -> Option<String> {
        if !self.config().trace {
            return None;
        }
        let mut buf = Vec::new();
        self.trace_export(&mut buf).unwrap();
        Some(String::from_utf8(buf).unwrap())
    }
}

impl StageNet for GridRoundAdapter {
    fn drive<P: NodeProgram>(
        &mut self,
        programs: &mut [P],
        stage: &'static str,
        cap: u64,
    ) -> Result<u64, LabelError> {
        self.run_stage(programs, cap).map_err(|e| match e {
            AdapterError::RoundLimitExceeded { .. } => LabelError::StageCap { stage, cap },
            other => LabelError::Adapter(other),
        })
    }

    fn export_trace(&self) -> Option<String> {
        if !self.net().config().trace {
            return None;
        }
        let mut buf = Vec::new();
        self.net().trace_export(&mut buf).unwrap();
        Some(String::from_utf8(buf).unwrap())
    }
}

/// Labelling for grids too small to need any protocol.
fn trivial_labelling(vid_of_cell: &BTreeMap<CellCoord, u64>) -> Option<Labelling> {
    match vid_of_cell.len() {
        0 => Some(Labelling {
            labels: BTreeMap::new(),
            neighbor_labels: BTreeMap::new(),
            stage_rounds: Vec::new(),
            round_cap: stage_cap(0),
            trace: None,
        }),
        1 => {
            let cell = *vid_of_cell.keys().next().unwrap();
            let label = NodeLabel {
                l: 1,
                r: 1,
                pl: 1,
                pr: 1,
            };
            Some(Labelling {
                labels: BTreeMap::from([(cell, label)]),
                neighbor_labels: BTreeMap::from([(cell, [None; 4])]),
                stage_rounds: Vec::new(),
                round_cap: stage_cap(1),
                trace: None,
            })
        }
        _ => None,
    }
}

/// Runs the staged labelling protocols over a simulated grid network and
/// returns the labels, which must match the centralized computation.
pub fn run_labelling(
    vid_of_cell: &BTreeMap<CellCoord, u64>,
    opts: &LabelOptions,
) -> Result<Labelling, LabelError> {
    if let Some(t) = trivial_labelling(vid_of_cell) {
        return Ok(t);
    }
    let mut vids: Vec<u64> = vid_of_cell.values().cloned().collect();
    vids.sort_unstable();
    let mut edges = Vec::new();
    for (&cell, &v) in vid_of_cell {
        for (di, dj) in [(1i64, 0i64), (0, 1)] {
            if let Some(&other) = vid_of_cell.get(&cell.offset(di, dj)) {
                edges.push((v, other));
            }
        }
    }
    let cfg = SimConfig {
        local_mode: LocalMode::Unicast,
        gamma: 1.0,
        w_max: LABEL_W_MAX,
        trace: opts.trace,
        shuffle_seed: None,
    };
    let mut net = SimNetwork::new(&vids, &edges, cfg)?;
    run_labelling_on(&mut net, vid_of_cell)
}

/// A labelling computed on the hosted grid, with its round costs.
#[derive(Debug)]
pub struct HostedLabelling {
    pub labelling: Labelling,
    /// Grid rounds consumed across all stages.
    pub gamma_rounds: u64,
    /// Unit-disk-graph rounds backing those grid rounds.
    pub udg_rounds: u64,
}

/// Runs the same staged protocols with every grid node hosted on its
/// cell's representative, each grid round costing one adapter window of
/// network rounds. The result must equal [`run_labelling`] exactly.
pub fn run_labelling_hosted(
    udg: &UdgInstance,
    build: &GridBuild,
    opts: &LabelOptions,
) -> Result<HostedLabelling, LabelError> {
    if let Some(t) = trivial_labelling(&build.vid_of_cell) {
        return Ok(HostedLabelling {
            labelling: t,
            gamma_rounds: 0,
            udg_rounds: 0,
        });
    }
    let cfg = AdapterConfig {
        gamma_w_max: LABEL_W_MAX,
        trace: opts.trace,
        ..AdapterConfig::default()
    };
    let mut adapter = GridRoundAdapter::new(udg, build, &cfg)?;
    let labelling = run_labelling_on(&mut adapter, &build.vid_of_cell)?;
    Ok(HostedLabelling {
        gamma_rounds: adapter.gamma_rounds(),
        udg_rounds: adapter.udg_rounds(),
        labelling,
    })
}

fn run_labelling_on<D: StageNet>(
    net: &mut D,
    vid_of_cell: &BTreeMap<CellCoord, u64>,
) -> Result<Labelling, LabelError> {
    let n = vid_of_cell.len();
    let mut vids: Vec<u64> = vid_of_cell.values().cloned().collect();
    vids.sort_unstable();
    let cell_of_vid: BTreeMap<u64, CellCoord> =
        vid_of_cell.iter().map(|(&c, &v)| (v, c)).collect();
    if cell_of_vid.len() != n {
        return Err(LabelError::Inconsistent("virtual ids not unique".into()));
    }
    let cap = stage_cap(n);
    let mut stage_rounds = Vec::new();

    // Stage: tree + slots.
    let seats: Vec<GridSeat> = vids
        .iter()
        .map(|&v| seat_of(cell_of_vid[&v], vid_of_cell))
        .collect();
    let mut tree_programs: Vec<TreeSlotsProgram> =
        seats.iter().cloned().map(TreeSlotsProgram::new).collect();
    let r = net.drive(&mut tree_programs, "tree", cap)?;
    stage_rounds.push(("tree", r));
    let views: Vec<SlotView> = tree_programs
        .iter()
        .map(|p| {
            p.view
                .clone()
                .ok_or_else(|| LabelError::Inconsistent("tree stage incomplete".into()))
        })
        .collect::<Result<_, _>>()?;

    // Stage: ring minimum.
    let mut ring_programs: Vec<RingProgram> = vids
        .iter()
        .zip(&views)
        .map(|(&v, view)| RingProgram::new(v, view, n))
        .collect();
    let r = net.drive(&mut ring_programs, "ring", cap)?;
    stage_rounds.push(("ring", r));
    let roots: BTreeSet<u64> = ring_programs
        .iter()
        .map(|p| {
            p.root()
                .ok_or_else(|| LabelError::Inconsistent("ring stage incomplete".into()))
        })
        .collect::<Result<_, _>>()?;
    if roots.len() != 1 {
        return Err(LabelError::Inconsistent(format!(
            "nodes disagree on the root: {roots:?}"
        )));
    }
    let root = *roots.first().unwrap();

    // Stage: line positions.
    let mut line_programs: Vec<LineProgram> = vids
        .iter()
        .zip(&views)
        .map(|(&v, view)| LineProgram::new(v, view, root, n))
        .collect();
    let r = net.drive(&mut line_programs, "line", cap)?;
    stage_rounds.push(("line", r));

    // Stage: rank (first-visit prefix counts).
    let mut slot_inputs: Vec<Vec<(u64, Vec<Level0>, bool)>> = Vec::with_capacity(n);
    let mut slot_positions: Vec<BTreeMap<u64, u64>> = Vec::with_capacity(n);
    for p in &line_programs {
        let pos = p
            .positions()
            .ok_or_else(|| LabelError::Inconsistent("line stage incomplete".into()))?;
        let min_pos = pos.values().min().cloned().unwrap();
        let mut inputs = Vec::new();
        for (&sid, &sp) in &pos {
            inputs.push((sid, p.pointer_levels(sid), sp == min_pos));
        }
        slot_inputs.push(inputs);
        slot_positions.push(pos);
    }
    let mut rank_programs: Vec<RankProgram> = slot_inputs
        .iter()
        .map(|inp| RankProgram::new(inp, root, n))
        .collect();
    let r = net.drive(&mut rank_programs, "rank", cap)?;
    stage_rounds.push(("rank", r));

    // Local: preorder number and subtree bound per node.
    let mut own_intervals: Vec<(u64, u64)> = Vec::with_capacity(n);
    for (i, p) in rank_programs.iter().enumerate() {
        let prefixes = p
            .prefixes()
            .ok_or_else(|| LabelError::Inconsistent("rank stage incomplete".into()))?;
        let pos = &slot_positions[i];
        let first = *pos
            .iter()
            .min_by_key(|&(_, &sp)| sp)
            .map(|(s, _)| s)
            .unwrap();
        let last = *pos
            .iter()
            .max_by_key(|&(_, &sp)| sp)
            .map(|(s, _)| s)
            .unwrap();
        let l = prefixes[&first] + 1;
        let r_v = if vids[i] == root {
            n as u64
        } else {
            prefixes[&last] + p.weight(last)
        };
        own_intervals.push((l, r_v));
    }

    // Stage: portal minimum.
    let mut portal_programs: Vec<PortalProgram> = vids
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let seat = &seats[i];
            PortalProgram::new(v, own_intervals[i], seat.dirs[NORTH], seat.dirs[SOUTH], n)
        })
        .collect();
    let r = net.drive(&mut portal_programs, "portal", cap)?;
    stage_rounds.push(("portal", r));

    // Local: assemble labels.
    let mut labels: BTreeMap<CellCoord, NodeLabel> = BTreeMap::new();
    let mut full: Vec<NodeLabel> = Vec::with_capacity(n);
    for (i, p) in portal_programs.iter().enumerate() {
        let (pl, pr) = p
            .portal_interval()
            .ok_or_else(|| LabelError::Inconsistent("portal stage incomplete".into()))?;
        let lab = NodeLabel {
            l: own_intervals[i].0,
            r: own_intervals[i].1,
            pl,
            pr,
        };
        labels.insert(cell_of_vid[&vids[i]], lab);
        full.push(lab);
    }

    // Stage: exchange labels with grid neighbors.
    let mut exchange_programs: Vec<ExchangeProgram> = seats
        .iter()
        .cloned()
        .zip(full.iter().cloned())
        .map(|(seat, lab)| ExchangeProgram::new(seat, lab))
        .collect();
    let r = net.drive(&mut exchange_programs, "exchange", cap)?;
    stage_rounds.push(("exchange", r));
    let neighbor_labels: BTreeMap<CellCoord, [Option<NodeLabel>; 4]> = exchange_programs
        .iter()
        .enumerate()
        .map(|(i, p)| (cell_of_vid[&vids[i]], p.neighbor_labels))
        .collect();

    let trace = net.export_trace();

    Ok(Labelling {
        labels,
        neighbor_labels,
        stage_rounds,
        round_cap: cap,
        trace,
    })
}
