//! Deterministic round-synchronous simulator for hybrid networks.
//!
//! A network couples two channels. The *local* channel carries messages along
//! the edges of a fixed topology; in [`LocalMode::Broadcast`] a node sends one
//! message per round to all neighbors at once, in [`LocalMode::Unicast`] it
//! may send a distinct message over each incident edge. The *global* channel
//! carries messages to any node whose id the sender has learned, capped at
//! `ceil(gamma * log2 n)` sends per node per round. Receiving is never
//! capped.
//!
//! Messages are sequences of at most `w_max` [`Word`]s. A word holds one
//! id-sized datum, so message sizes stay logarithmic in the network size.
//! Sends issued in round `r` are delivered at the start of round `r + 1`,
//! sorted by sender id and send order; an optional seeded shuffle replaces
//! that order to exercise order independence of protocols.
//!
//! Id knowledge spreads only through the network itself: a node initially
//! knows its own id and its neighbors' ids, and learns the sender and every
//! id word of each message it receives. Sending to an unknown id is an
//! error, as is exceeding the budget or the message size; errors abort the
//! round and surface as [`SimError`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write as IoWrite;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CellCoord, NodeId, Point};

/// One id-sized unit of message payload.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Word {
    Id(NodeId),
    Cell(CellCoord),
    Int(i64),
    Pt(Point),
}

impl Word {
    pub fn as_id(&self) -> Option<NodeId> {
        match self {
            Word::Id(id) => Some(*id),
            _ => None,
        }
    }

    pub fn as_cell(&self) -> Option<CellCoord> {
        match self {
            Word::Cell(c) => Some(*c),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Word::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_pt(&self) -> Option<Point> {
        match self {
            Word::Pt(p) => Some(*p),
            _ => None,
        }
    }
}

/// Which channel carried a message.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    Local,
    Global,
}

/// Local channel discipline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalMode {
    /// Distinct messages per incident edge.
    Unicast,
    /// One message per round, delivered to every neighbor.
    Broadcast,
}

/// A delivered message.
#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub src: NodeId,
    pub dst: NodeId,
    pub channel: Channel,
    pub payload: Arc<Vec<Word>>,
}

/// Simulator parameters.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub local_mode: LocalMode,
    /// Global sends per node per round are `ceil(gamma * log2 n)`.
    pub gamma: f64,
    /// Maximum words per message.
    pub w_max: usize,
    /// Record a trace of all sends and deliveries.
    pub trace: bool,
    /// Shuffle each inbox deterministically instead of sorting by sender.
    pub shuffle_seed: Option<u64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            local_mode: LocalMode::Unicast,
            gamma: 1.0,
            w_max: 8,
            trace: false,
            shuffle_seed: None,
        }
    }
}

/// Per-round:
/// global send cap for a node in a network of `n` nodes.
pub fn global_budget(n: usize, gamma: f64) -> usize {
    if n < 2 {
        return 0;
    }
    (gamma * (n as f64).log2()).ceil() as usize
}

/// Simulator errors. Any error aborts the offending round.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("node {node} exceeded its global budget of {budget} in round {round}")]
    BudgetExceeded { node: NodeId, round: u64, budget: usize },
    #[error("node {node} sent to unknown or non-adjacent destination {dst} in round {round}")]
    UnknownDestination { node: NodeId, dst: NodeId, round: u64 },
    #[error("node {node} sent {len} words in round {round}, limit {w_max}")]
    OversizedPayload { node: NodeId, round: u64, len: usize, w_max: usize },
    #[error("node {node} used per-edge local sends in broadcast mode in round {round}")]
    BroadcastRestriction { node: NodeId, round: u64 },
    #[error("node {node} sent twice over the same local edge to {dst} in round {round}")]
    LocalCapacityExceeded { node: NodeId, dst: NodeId, round: u64 },
    #[error("no termination within {limit} rounds")]
    RoundLimitExceeded { limit: u64 },
    #[error("duplicate node id {0} in topology")]
    DuplicateNode(NodeId),
    #[error("edge ({a}, {b}) references an unknown node or is a self-loop")]
    InvalidEdge { a: NodeId, b: NodeId },
}

/// Message counts for one executed round.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct RoundReport {
    pub round: u64,
    pub local_messages: u64,
    pub global_messages: u64,
    pub local_words: u64,
    pub global_words: u64,
    /// Largest number of global sends issued by a single node.
    pub max_global_sends: u64,
}

/// Read-only per-node context passed to programs each round.
pub struct NodeCtx<'a> {
    pub id: NodeId,
    pub round: u64,
    pub neighbors: &'a [NodeId],
    pub n: usize,
    pub global_budget: usize,
    pub local_mode: LocalMode,
}

pub(crate) enum DstSpec {
    Node(NodeId),
    AllNeighbors,
}

/// Collects the messages a node emits during one round.
pub struct Outbox {
    sends: Vec<(Channel, DstSpec, Arc<Vec<Word>>)>,
}

impl Outbox {
    pub(crate) fn new() -> Self {
        Outbox { sends: Vec::new() }
    }

    /// Drains the raw sends; used by adapters that interpret program
    /// output under their own channel rules.
    pub(crate) fn drain_sends(&mut self) -> Vec<(Channel, DstSpec, Arc<Vec<Word>>)> {
        std::mem::take(&mut self.sends)
    }

    /// Sends over the local edge to `dst` (unicast mode only).
    pub fn send_local(&mut self, dst: NodeId, words: Vec<Word>) {
        self.sends
            .push((Channel::Local, DstSpec::Node(dst), Arc::new(words)));
    }

    /// Sends one message to every local neighbor. Works in both modes.
    pub fn broadcast_local(&mut self, words: Vec<Word>) {
        self.broadcast_local_arc(Arc::new(words));
    }

    /// Broadcast of an already shared payload (no copy per neighbor).
    pub fn broadcast_local_arc(&mut self, words: Arc<Vec<Word>>) {
        self.sends.push((Channel::Local, DstSpec::AllNeighbors, words));
    }

    /// Sends over the global channel; `dst` must already be known.
    pub fn send_global(&mut self, dst: NodeId, words: Vec<Word>) {
        self.send_global_arc(dst, Arc::new(words));
    }

    pub fn send_global_arc(&mut self, dst: NodeId, words: Arc<Vec<Word>>) {
        self.sends
            .push((Channel::Global, DstSpec::Node(dst), words));
    }
}

/// A node's behavior: consume this round's inbox, emit next round's sends.
pub trait NodeProgram {
    fn on_round(&mut self, ctx: &NodeCtx, inbox: &[Message], out: &mut Outbox);

    /// True when the node has nothing further to send regardless of input.
    /// Used by idle-based stop predicates.
    fn idle(&self) -> bool {
        false
    }
}

#[derive(Serialize)]
struct TraceHeader<'a> {
    schema: u32,
    kind: &'a str,
    n: usize,
    local_mode: LocalMode,
    gamma: f64,
    w_max: usize,
}

#[derive(Serialize)]
struct TraceEvent<'a> {
    round: u64,
    ev: &'a str,
    ch: &'a str,
    src: NodeId,
    dst: NodeId,
    words: &'a [Word],
}

struct Pending {
    src: usize,
    dst: usize,
    channel: Channel,
    seq: u64,
    payload: Arc<Vec<Word>>,
}

/// Messages validated in some round and awaiting delivery.
pub struct PendingRound {
    round: u64,
    sends: Vec<Pending>,
    report: RoundReport,
}

impl PendingRound {
    pub fn report(&self) -> RoundReport {
        self.report
    }
}

/// The simulated network: topology, knowledge sets, inboxes, metrics.
pub struct SimNetwork {
    ids: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    adj: Vec<Vec<usize>>,
    neighbor_ids: Vec<Vec<NodeId>>,
    knows: Vec<BTreeSet<usize>>,
    cfg: SimConfig,
    round: u64,
    inboxes: Vec<Vec<Message>>,
    reports: Vec<RoundReport>,
    trace: Vec<String>,
}

impl SimNetwork {
    pub fn new(
        nodes: &[NodeId],
        edges: &[(NodeId, NodeId)],
        cfg: SimConfig,
    ) -> Result<Self, SimError> {
        let mut ids = nodes.to_vec();
        ids.sort_unstable();
        for w in ids.windows(2) {
            if w[0] == w[1] {
                return Err(SimError::DuplicateNode(w[0]));
            }
        }
        let index: HashMap<NodeId, usize> =
            ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); ids.len()];
        for &(a, b) in edges {
            let (ia, ib) = match (index.get(&a), index.get(&b)) {
                (Some(&ia), Some(&ib)) if ia != ib => (ia, ib),
                _ => return Err(SimError::InvalidEdge { a, b }),
            };
            adj[ia].insert(ib);
            adj[ib].insert(ia);
        }
        let adj: Vec<Vec<usize>> = adj.into_iter().map(|s| s.into_iter().collect()).collect();
        let neighbor_ids: Vec<Vec<NodeId>> = adj
            .iter()
            .map(|ns| ns.iter().map(|&v| ids[v]).collect())
            .collect();
        let mut knows: Vec<BTreeSet<usize>> = Vec::with_capacity(ids.len());
        for (u, ns) in adj.iter().enumerate() {
            let mut k: BTreeSet<usize> = ns.iter().copied().collect();
            k.insert(u);
            knows.push(k);
        }
        let inboxes = vec![Vec::new(); ids.len()];
        let mut net = SimNetwork {
            ids,
            index,
            adj,
            neighbor_ids,
            knows,
            cfg,
            round: 0,
            inboxes,
            reports: Vec::new(),
            trace: Vec::new(),
        };
        if net.cfg.trace {
            let header = TraceHeader {
                schema: 1,
                kind: "trace",
                n: net.ids.len(),
                local_mode: net.cfg.local_mode,
                gamma: net.cfg.gamma,
                w_max: net.cfg.w_max,
            };
            net.trace.push(serde_json::to_string(&header).unwrap());
        }
        Ok(net)
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn idx_of(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn neighbors(&self, id: NodeId) -> &[NodeId] {
        &self.neighbor_ids[self.index[&id]]
    }

    pub fn global_budget(&self) -> usize {
        global_budget(self.ids.len(), self.cfg.gamma)
    }

    /// Ids the node has learned so far (including itself and neighbors).
    pub fn known_ids(&self, id: NodeId) -> Vec<NodeId> {
        self.knows[self.index[&id]]
            .iter()
            .map(|&u| self.ids[u])
            .collect()
    }

    /// Marks `ids` as known to `node`, as if learned in an earlier phase.
    pub fn seed_knowledge(&mut self, node: NodeId, learned: &[NodeId]) {
        let u = self.index[&node];
        for id in learned {
            if let Some(&v) = self.index.get(id) {
                self.knows[u].insert(v);
            }
        }
    }

    /// Messages currently waiting in inboxes.
    pub fn pending_messages(&self) -> usize {
        self.inboxes.iter().map(|b| b.len()).sum()
    }

    /// Inbox of `id` for the upcoming round (already delivered).
    pub fn inbox(&self, id: NodeId) -> &[Message] {
        &self.inboxes[self.index[&id]]
    }

    pub fn reports(&self) -> &[RoundReport] {
        &self.reports
    }

    /// Writes the trace as JSON lines. Empty unless `cfg.trace` was set.
    pub fn trace_export<W: IoWrite>(&self, mut w: W) -> std::io::Result<()> {
        for line in &self.trace {
            writeln!(w, "{}", line)?;
        }
        Ok(())
    }

    fn trace_event(&mut self, ev: &str, ch: Channel, src: usize, dst: usize, words: &[Word]) {
        if !self.cfg.trace {
            return;
        }
        let line = serde_json::to_string(&TraceEvent {
            round: self.round,
            ev,
            ch: match ch {
                Channel::Local => "L",
                Channel::Global => "G",
            },
            src: self.ids[src],
            dst: self.ids[dst],
            words,
        })
        .unwrap();
        self.trace.push(line);
    }

    /// Runs the program phase of one round: feeds each node its inbox,
    /// validates every send against channel rules and budgets. Inboxes are
    /// consumed. Deliver the result with [`SimNetwork::deliver`].
    pub fn collect_round<P: NodeProgram>(
        &mut self,
        programs: &mut [P],
    ) -> Result<PendingRound, SimError> {
        assert_eq!(programs.len(), self.ids.len(), "one program per node");
        let budget = self.global_budget();
        let mut report = RoundReport {
            round: self.round,
            ..RoundReport::default()
        };
        let mut sends = Vec::new();
        let mut seq = 0u64;
        for u in 0..self.ids.len() {
            let inbox = std::mem::take(&mut self.inboxes[u]);
            let ctx = NodeCtx {
                id: self.ids[u],
                round: self.round,
                neighbors: &self.neighbor_ids[u],
                n: self.ids.len(),
                global_budget: budget,
                local_mode: self.cfg.local_mode,
            };
            let mut out = Outbox::new();
            programs[u].on_round(&ctx, &inbox, &mut out);
            let mut globals_used = 0usize;
            let mut local_dsts: BTreeSet<usize> = BTreeSet::new();
            let mut local_broadcast = false;
            for (channel, dst_spec, payload) in out.sends {
                if payload.len() > self.cfg.w_max {
                    return Err(SimError::OversizedPayload {
                        node: self.ids[u],
                        round: self.round,
                        len: payload.len(),
                        w_max: self.cfg.w_max,
                    });
                }
                match (channel, dst_spec) {
                    (Channel::Local, DstSpec::AllNeighbors) => {
                        if local_broadcast || !local_dsts.is_empty() {
                            return Err(SimError::BroadcastRestriction {
                                node: self.ids[u],
                                round: self.round,
                            });
                        }
                        local_broadcast = true;
                        let neighbors = self.adj[u].clone();
                        for v in neighbors {
                            self.trace_event("send", Channel::Local, u, v, &payload);
                            report.local_messages += 1;
                            report.local_words += payload.len() as u64;
                            sends.push(Pending {
                                src: u,
                                dst: v,
                                channel: Channel::Local,
                                seq,
                                payload: Arc::clone(&payload),
                            });
                            seq += 1;
                        }
                    }
                    (Channel::Local, DstSpec::Node(dst)) => {
                        if self.cfg.local_mode == LocalMode::Broadcast {
                            return Err(SimError::BroadcastRestriction {
                                node: self.ids[u],
                                round: self.round,
                            });
                        }
                        let v = match self.index.get(&dst) {
                            Some(&v) if self.adj[u].binary_search(&v).is_ok() => v,
                            _ => {
                                return Err(SimError::UnknownDestination {
                                    node: self.ids[u],
                                    dst,
                                    round: self.round,
                                })
                            }
                        };
                        if !local_dsts.insert(v) {
                            return Err(SimError::LocalCapacityExceeded {
                                node: self.ids[u],
                                dst,
                                round: self.round,
                            });
                        }
                        self.trace_event("send", Channel::Local, u, v, &payload);
                        report.local_messages += 1;
                        report.local_words += payload.len() as u64;
                        sends.push(Pending {
                            src: u,
                            dst: v,
                            channel: Channel::Local,
                            seq,
                            payload,
                        });
                        seq += 1;
                    }
                    (Channel::Global, DstSpec::Node(dst)) => {
                        let v = match self.index.get(&dst) {
                            Some(&v) if self.knows[u].contains(&v) => v,
                            _ => {
                                return Err(SimError::UnknownDestination {
                                    node: self.ids[u],
                                    dst,
                                    round: self.round,
                                })
                            }
                        };
                        globals_used += 1;
                        if globals_used > budget {
                            return Err(SimError::BudgetExceeded {
                                node: self.ids[u],
                                round: self.round,
                                budget,
                            });
                        }
                        self.trace_event("send", Channel::Global, u, v, &payload);
                        report.global_messages += 1;
                        report.global_words += payload.len() as u64;
                        sends.push(Pending {
                            src: u,
                            dst: v,
                            channel: Channel::Global,
                            seq,
                            payload,
                        });
                        seq += 1;
                    }
                    (Channel::Global, DstSpec::AllNeighbors) => unreachable!(),
                }
            }
            report.max_global_sends = report.max_global_sends.max(globals_used as u64);
        }
        Ok(PendingRound {
            round: self.round,
            sends,
            report,
        })
    }

    /// Delivers a collected round: fills inboxes for the next round, grows
    /// knowledge sets, advances the round counter.
    pub fn deliver(&mut self, pending: PendingRound) {
        debug_assert_eq!(pending.round, self.round);
        let mut per_dst: BTreeMap<usize, Vec<Pending>> = BTreeMap::new();
        for p in pending.sends {
            per_dst.entry(p.dst).or_default().push(p);
        }
        self.round += 1;
        for (dst, mut msgs) in per_dst {
            msgs.sort_by_key(|p| (self.ids[p.src], p.seq));
            if let Some(seed) = self.cfg.shuffle_seed {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    seed ^ self.round.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ self.ids[dst],
                );
                msgs.shuffle(&mut rng);
            }
            for p in msgs {
                self.knows[dst].insert(p.src);
                for w in p.payload.iter() {
                    if let Word::Id(id) = w {
                        if let Some(&v) = self.index.get(id) {
                            self.knows[dst].insert(v);
                        }
                    }
                }
                self.trace_event("deliver", p.channel, p.src, dst, &p.payload);
                self.inboxes[dst].push(Message {
                    src: self.ids[p.src],
                    dst: self.ids[dst],
                    channel: p.channel,
                    payload: p.payload,
                });
            }
        }
        self.reports.push(pending.report);
    }

    /// Executes one full round.
    pub fn run_round<P: NodeProgram>(&mut self, programs: &mut [P]) -> Result<RoundReport, SimError> {
        let pending = self.collect_round(programs)?;
        let report = pending.report();
        self.deliver(pending);
        Ok(report)
    }

    /// Runs rounds until `stop` holds, returning the number of rounds
    /// executed. The predicate is checked before the first round and after
    /// each one; exceeding `max_rounds` is an error.
    pub fn run_until<P, F>(
        &mut self,
        programs: &mut [P],
        max_rounds: u64,
        stop: F,
    ) -> Result<u64, SimError>
    where
        P: NodeProgram,
        F: Fn(&SimNetwork, &[P]) -> bool,
    {
        let mut executed = 0u64;
        while !stop(self, programs) {
            if executed >= max_rounds {
                return Err(SimError::RoundLimitExceeded { limit: max_rounds });
            }
            self.run_round(programs)?;
            executed += 1;
        }
        Ok(executed)
    }

    /// Stop predicate: every program idle and no message in flight.
    pub fn quiescent<P: NodeProgram>(net: &SimNetwork, programs: &[P]) -> bool {
        net.pending_messages() == 0 && programs.iter().all(|p| p.idle())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_net(n: usize, cfg: SimConfig) -> SimNetwork {
        let ids: Vec<NodeId> = (0..n as NodeId).collect();
        let edges: Vec<(NodeId, NodeId)> = (1..n as NodeId).map(|i| (i - 1, i)).collect();
        SimNetwork::new(&ids, &edges, cfg).unwrap()
    }

    /// Min-id flood: every node repeats the smallest id it has seen.
    struct MinFlood {
        best: NodeId,
        last_sent: Option<NodeId>,
    }

    impl NodeProgram for MinFlood {
        fn on_round(&mut self, _ctx: &NodeCtx, inbox: &[Message], out: &mut Outbox) {
            for m in inbox {
                if let Some(v) = m.payload[0].as_id() {
                    self.best = self.best.min(v);
                }
            }
            if self.last_sent != Some(self.best) {
                out.broadcast_local(vec![Word::Id(self.best)]);
                self.last_sent = Some(self.best);
            }
        }

        fn idle(&self) -> bool {
            self.last_sent == Some(self.best)
        }
    }

    fn min_flood_programs(net: &SimNetwork) -> Vec<MinFlood> {
        net.ids()
            .iter()
            .map(|&id| MinFlood {
                best: id,
                last_sent: None,
            })
            .collect()
    }

    #[test]
    fn min_flood_converges_in_diameter_rounds() {
        for mode in [LocalMode::Unicast, LocalMode::Broadcast] {
            let cfg = SimConfig {
                local_mode: mode,
                ..SimConfig::default()
            };
            let mut net = path_net(6, cfg);
            let mut progs = min_flood_programs(&net);
            let rounds = net
                .run_until(&mut progs, 100, SimNetwork::quiescent)
                .unwrap();
            assert!(progs.iter().all(|p| p.best == 0));
            // Node 5 hears about id 0 after 5 hops; one more round for the
            // last broadcast to drain.
            assert_eq!(rounds, 7);
        }
    }

    #[test]
    fn min_flood_unaffected_by_inbox_shuffle() {
        let cfg = SimConfig {
            shuffle_seed: Some(42),
            ..SimConfig::default()
        };
        let mut net = path_net(6, cfg);
        let mut progs = min_flood_programs(&net);
        net.run_until(&mut progs, 100, SimNetwork::quiescent).unwrap();
        assert!(progs.iter().all(|p| p.best == 0));
    }

    struct Script {
        rounds: Vec<Vec<(Channel, NodeId, Vec<Word>)>>,
    }

    impl NodeProgram for Script {
        fn on_round(&mut self, ctx: &NodeCtx, _inbox: &[Message], out: &mut Outbox) {
            if let Some(sends) = self.rounds.get(ctx.round as usize) {
                for (ch, dst, words) in sends {
                    match ch {
                        Channel::Local => out.send_local(*dst, words.clone()),
                        Channel::Global => out.send_global(*dst, words.clone()),
                    }
                }
            }
        }
    }

    fn silent(n: usize) -> Vec<Script> {
        (0..n).map(|_| Script { rounds: vec![] }).collect()
    }

    #[test]
    fn budget_is_enforced() {
        // n = 4 nodes, gamma = 1: budget = 2 global sends per round.
        let mut net = path_net(4, SimConfig::default());
        assert_eq!(net.global_budget(), 2);
        let mut progs = silent(4);
        progs[0] = Script {
            rounds: vec![vec![
                (Channel::Global, 1, vec![Word::Int(1)]),
                (Channel::Global, 1, vec![Word::Int(2)]),
                (Channel::Global, 1, vec![Word::Int(3)]),
            ]],
        };
        let err = net.run_round(&mut progs).unwrap_err();
        assert_eq!(
            err,
            SimError::BudgetExceeded {
                node: 0,
                round: 0,
                budget: 2
            }
        );
    }

    #[test]
    fn global_send_requires_learned_id() {
        // 0 cannot reach non-neighbor 3 until someone tells it the id.
        let mut net = path_net(4, SimConfig::default());
        let mut bad = silent(4);
        bad[0] = Script {
            rounds: vec![vec![(Channel::Global, 3, vec![Word::Int(9)])]],
        };
        let err = net.run_round(&mut bad).unwrap_err();
        assert_eq!(
            err,
            SimError::UnknownDestination {
                node: 0,
                dst: 3,
                round: 0
            }
        );

        let mut net = path_net(4, SimConfig::default());
        let mut progs = silent(4);
        // Node 1 knows 2? No: 1's neighbors are 0 and 2. Node 2 knows 3 and
        // introduces it to 1 over the local edge; then 1 reaches 3 globally.
        progs[2] = Script {
            rounds: vec![vec![(Channel::Local, 1, vec![Word::Id(3)])]],
        };
        progs[1] = Script {
            rounds: vec![vec![], vec![(Channel::Global, 3, vec![Word::Int(7)])]],
        };
        net.run_round(&mut progs).unwrap();
        net.run_round(&mut progs).unwrap();
        let inbox = net.inbox(3);
        assert_eq!(inbox.len(), 1);
        assert_eq!(inbox[0].src, 1);
        assert_eq!(inbox[0].channel, Channel::Global);
        assert_eq!(inbox[0].payload[0], Word::Int(7));
    }

    #[test]
    fn local_send_requires_adjacency() {
        let mut net = path_net(4, SimConfig::default());
        let mut progs = silent(4);
        progs[0] = Script {
            rounds: vec![vec![(Channel::Local, 2, vec![Word::Int(1)])]],
        };
        let err = net.run_round(&mut progs).unwrap_err();
        assert_eq!(
            err,
            SimError::UnknownDestination {
                node: 0,
                dst: 2,
                round: 0
            }
        );
    }

    #[test]
    fn oversized_payload_rejected() {
        let mut net = path_net(2, SimConfig::default());
        let mut progs = silent(2);
        progs[0] = Script {
            rounds: vec![vec![(
                Channel::Local,
                1,
                (0..9).map(Word::Int).collect(),
            )]],
        };
        let err = net.run_round(&mut progs).unwrap_err();
        assert_eq!(
            err,
            SimError::OversizedPayload {
                node: 0,
                round: 0,
                len: 9,
                w_max: 8
            }
        );
    }

    #[test]
    fn broadcast_mode_rejects_unicast() {
        let cfg = SimConfig {
            local_mode: LocalMode::Broadcast,
            ..SimConfig::default()
        };
        let mut net = path_net(3, cfg);
        let mut progs = silent(3);
        progs[1] = Script {
            rounds: vec![vec![(Channel::Local, 0, vec![Word::Int(1)])]],
        };
        let err = net.run_round(&mut progs).unwrap_err();
        assert_eq!(
            err,
            SimError::BroadcastRestriction { node: 1, round: 0 }
        );
    }

    #[test]
    fn duplicate_local_edge_send_rejected() {
        let mut net = path_net(2, SimConfig::default());
        let mut progs = silent(2);
        progs[0] = Script {
            rounds: vec![vec![
                (Channel::Local, 1, vec![Word::Int(1)]),
                (Channel::Local, 1, vec![Word::Int(2)]),
            ]],
        };
        let err = net.run_round(&mut progs).unwrap_err();
        assert_eq!(
            err,
            SimError::LocalCapacityExceeded {
                node: 0,
                dst: 1,
                round: 0
            }
        );
    }

    #[test]
    fn delivery_is_next_round_and_ordered() {
        let mut net = path_net(3, SimConfig::default());
        let mut progs = silent(3);
        progs[0] = Script {
            rounds: vec![vec![
                (Channel::Local, 1, vec![Word::Int(10)]),
            ]],
        };
        progs[2] = Script {
            rounds: vec![vec![
                (Channel::Local, 1, vec![Word::Int(30)]),
            ]],
        };
        net.run_round(&mut progs).unwrap();
        // Delivered after the sending round, sorted by sender id.
        let inbox = net.inbox(1);
        assert_eq!(inbox.len(), 2);
        assert_eq!(inbox[0].src, 0);
        assert_eq!(inbox[1].src, 2);
        assert_eq!(inbox[0].payload[0], Word::Int(10));
    }

    #[test]
    fn trace_round_trips_as_json_lines() {
        let cfg = SimConfig {
            trace: true,
            ..SimConfig::default()
        };
        let mut net = path_net(2, cfg);
        let mut progs = silent(2);
        progs[0] = Script {
            rounds: vec![vec![(
                Channel::Local,
                1,
                vec![Word::Id(1), Word::Cell(CellCoord::new(-1, 2)), Word::Pt(Point::new(0.5, 0.25))],
            )]],
        };
        net.run_round(&mut progs).unwrap();
        let mut buf = Vec::new();
        net.trace_export(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3); // header + send + deliver
        let header: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(header["schema"], 1);
        assert_eq!(header["n"], 2);
        let send: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(send["ev"], "send");
        assert_eq!(send["ch"], "L");
        assert_eq!(send["round"], 0);
        let deliver: serde_json::Value = serde_json::from_str(lines[2]).unwrap();
        assert_eq!(deliver["ev"], "deliver");
        assert_eq!(deliver["round"], 1);
        assert_eq!(deliver["words"][0]["id"], 1);
    }

    #[test]
    fn run_until_reports_round_limit() {
        struct Chatter;
        impl NodeProgram for Chatter {
            fn on_round(&mut self, _ctx: &NodeCtx, _inbox: &[Message], out: &mut Outbox) {
                out.broadcast_local(vec![Word::Int(0)]);
            }
        }
        let mut net = path_net(2, SimConfig::default());
        let mut progs = vec![Chatter, Chatter];
        let err = net
            .run_until(&mut progs, 5, SimNetwork::quiescent)
            .unwrap_err();
        assert_eq!(err, SimError::RoundLimitExceeded { limit: 5 });
    }

    #[test]
    fn reports_count_messages() {
        let mut net = path_net(3, SimConfig::default());
        let mut progs = silent(3);
        progs[1] = Script {
            rounds: vec![vec![
                (Channel::Local, 0, vec![Word::Int(1), Word::Int(2)]),
                (Channel::Local, 2, vec![Word::Int(3)]),
                (Channel::Global, 0, vec![Word::Int(4)]),
            ]],
        };
        let report = net.run_round(&mut progs).unwrap();
        assert_eq!(report.local_messages, 2);
        assert_eq!(report.global_messages, 1);
        assert_eq!(report.local_words, 3);
        assert_eq!(report.global_words, 1);
        assert_eq!(report.max_global_sends, 1);
    }

    #[test]
    fn invalid_topologies_rejected() {
        assert!(matches!(
            SimNetwork::new(&[1, 1], &[], SimConfig::default()),
            Err(SimError::DuplicateNode(1))
        ));
        assert!(matches!(
            SimNetwork::new(&[1, 2], &[(1, 3)], SimConfig::default()),
            Err(SimError::InvalidEdge { a: 1, b: 3 })
        ));
        assert!(matches!(
            SimNetwork::new(&[1, 2], &[(2, 2)], SimConfig::default()),
            Err(SimError::InvalidEdge { a: 2, b: 2 })
        ));
    }
}
