//! Runs grid-level programs on the host network.
//!
//! Grid nodes are virtual: each lives on the representative of its cell,
//! and a host may carry many of them. One grid round is realized by a
//! fixed window of [`ADAPTER_WINDOW`] host rounds:
//!
//! * offset 0 — pending grid messages rotate into the hosted programs'
//!   inboxes, the programs run, and their output is packetized. Local
//!   grid messages start down the representation path of their grid
//!   edge; global ones are queued per destination host.
//! * offsets 0..=2 — path packets are forwarded hop by hop. Paths have
//!   at most three hops, so every local grid message lands within the
//!   window it was sent in.
//! * offsets 3..=11 — queued global packets drain under the host-level
//!   send cap, multiplexed over the remaining rounds. A queue still
//!   holding packets after the last slot is a budget violation.
//!
//! Messages between grid nodes on the same host never touch the
//! network. All grid-level channel rules (one local message per grid
//! edge, the global send cap, the knowledge requirement for global
//! destinations) are enforced here on the virtual ids, mirroring the
//! checks the simulator applies to real nodes.
//!
//! Packets embed the hosts of any grid ids they carry, so a host that
//! learns a grid id over the wire simultaneously learns which host to
//! reach it through.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use thiserror::Error;

use crate::geometry::{CellCoord, NodeId, UdgInstance};
use crate::grid::{edge_key, host_of_vid, EdgeKey, GridBuild, CONSTRUCTION_W_MAX};
use crate::sim::{
    global_budget, Channel, DstSpec, LocalMode, Message, NodeCtx, NodeProgram, Outbox, RoundReport,
    SimConfig, SimError, SimNetwork, Word,
};

/// Host rounds per grid round.
pub const ADAPTER_WINDOW: u64 = 12;

/// Last window offset reserved for path forwarding.
const LAST_RELAY_OFFSET: u64 = 2;

const TAG_PATH: i64 = 11;
const TAG_GLOB: i64 = 12;

/// Errors from hosted execution. The `Grid*` variants mirror the
/// simulator's channel rules, applied to virtual ids.
#[derive(Debug, Error, PartialEq)]
pub enum AdapterError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("host {host} could not drain its global packets within the window of grid round {gamma_round}")]
    BudgetExceeded { host: NodeId, gamma_round: u64 },
    #[error("grid node {vid} exceeded its global budget of {budget} in grid round {gamma_round}")]
    GridBudgetExceeded {
        vid: u64,
        gamma_round: u64,
        budget: usize,
    },
    #[error("grid node {vid} sent to unknown or non-adjacent destination {dst} in grid round {gamma_round}")]
    GridUnknownDestination {
        vid: u64,
        dst: u64,
        gamma_round: u64,
    },
    #[error("grid node {vid} sent {len} words in grid round {gamma_round}, limit {w_max}")]
    GridOversizedPayload {
        vid: u64,
        gamma_round: u64,
        len: usize,
        w_max: usize,
    },
    #[error("grid node {vid} mixed broadcast and per-edge sends in grid round {gamma_round}")]
    GridBroadcastRestriction { vid: u64, gamma_round: u64 },
    #[error("grid node {vid} sent twice over the grid edge to {dst} in grid round {gamma_round}")]
    GridLocalCapacityExceeded {
        vid: u64,
        dst: u64,
        gamma_round: u64,
    },
    #[error("host {host} has no forwarding entry for the grid edge {lo:?}-{hi:?}")]
    MissingPathState {
        host: NodeId,
        lo: CellCoord,
        hi: CellCoord,
    },
    #[error("host {host} accumulated a {len}-word relay message, limit {w_max}")]
    RelayOverflow {
        host: NodeId,
        len: usize,
        w_max: usize,
    },
    #[error("no grid-level termination within {limit} grid rounds")]
    RoundLimitExceeded { limit: u64 },
    #[error("adapter setup failed: {0}")]
    Setup(String),
}

/// Parameters of the hosted grid channel.
#[derive(Clone, Debug)]
pub struct AdapterConfig {
    /// Word limit per grid-level message.
    pub gamma_w_max: usize,
    /// Budget factor for grid-level global sends.
    pub gamma: f64,
    /// Local channel discipline at the grid level.
    pub gamma_local_mode: LocalMode,
    /// Word limit per host-level message.
    pub udg_w_max: usize,
    /// Record a host-level trace.
    pub trace: bool,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig {
            gamma_w_max: 4096,
            gamma: 1.0,
            gamma_local_mode: LocalMode::Unicast,
            udg_w_max: CONSTRUCTION_W_MAX,
            trace: false,
        }
    }
}

/// One grid message waiting for, or rotated into, a program inbox.
struct GammaMsg {
    src: u64,
    seq: i64,
    channel: Channel,
    payload: Arc<Vec<Word>>,
}

/// Immutable data shared by every host.
struct Shared {
    n_gamma: usize,
    gamma_budget: usize,
    gamma_w_max: usize,
    gamma_mode: LocalMode,
    udg_w_max: usize,
    all_vids: BTreeSet<u64>,
}

/// Per-host mutable state that outlives any one program set.
struct HostState {
    id: NodeId,
    /// Hosted virtual ids, ascending.
    vids: Vec<u64>,
    /// Grid adjacency of each hosted virtual id.
    grid_adj: BTreeMap<u64, Vec<u64>>,
    /// Cells of hosted virtual ids and of their grid neighbors.
    cell_of: BTreeMap<u64, CellCoord>,
    /// Forwarding entries for representation paths through this host.
    next_hops: BTreeMap<(EdgeKey, bool), NodeId>,
    /// Grid-level knowledge per hosted virtual id.
    knows: BTreeMap<u64, BTreeSet<u64>>,
    /// Grid messages delivered to hosted ids, pending the next rotation.
    inbox_next: BTreeMap<u64, Vec<GammaMsg>>,
    /// Global packets queued per destination host.
    global_out: BTreeMap<NodeId, VecDeque<Vec<Word>>>,
    seq: i64,
    error: Option<AdapterError>,
}

impl HostState {
    fn drained(&self) -> bool {
        self.inbox_next.values().all(Vec::is_empty) && self.global_out.is_empty()
    }
}

/// A parsed packet record.
enum Record {
    Path {
        key: EdgeKey,
        toward_hi: bool,
        src: u64,
        dst: u64,
        seq: i64,
        payload: Vec<Word>,
    },
    Glob {
        src: u64,
        dst: u64,
        seq: i64,
        payload: Vec<Word>,
    },
}

fn take_int(words: &[Word], at: &mut usize) -> i64 {
    let v = words[*at].as_int().expect("packet: integer word");
    *at += 1;
    v
}

fn take_cell(words: &[Word], at: &mut usize) -> CellCoord {
    let c = words[*at].as_cell().expect("packet: cell word");
    *at += 1;
    c
}

/// Splits a host message back into records, keeping each record's word
/// span so relays can forward it verbatim.
fn parse_records(words: &[Word]) -> Vec<(Record, std::ops::Range<usize>)> {
    let mut out = Vec::new();
    let mut at = 0;
    while at < words.len() {
        let start = at;
        let tag = take_int(words, &mut at);
        let rec = match tag {
            TAG_PATH => {
                let lo = take_cell(words, &mut at);
                let hi = take_cell(words, &mut at);
                let toward_hi = take_int(words, &mut at) != 0;
                let src = take_int(words, &mut at) as u64;
                let dst = take_int(words, &mut at) as u64;
                let seq = take_int(words, &mut at);
                skip_directory(words, &mut at);
                let payload = take_payload(words, &mut at);
                Record::Path {
                    key: (lo, hi),
                    toward_hi,
                    src,
                    dst,
                    seq,
                    payload,
                }
            }
            TAG_GLOB => {
                let src = take_int(words, &mut at) as u64;
                let dst = take_int(words, &mut at) as u64;
                let seq = take_int(words, &mut at);
                skip_directory(words, &mut at);
                let payload = take_payload(words, &mut at);
                Record::Glob {
                    src,
                    dst,
                    seq,
                    payload,
                }
            }
            other => panic!("packet: unknown record tag {other}"),
        };
        out.push((rec, start..at));
    }
    out
}

fn skip_directory(words: &[Word], at: &mut usize) {
    let n = take_int(words, at) as usize;
    *at += n;
}

fn take_payload(words: &[Word], at: &mut usize) -> Vec<Word> {
    let len = take_int(words, at) as usize;
    let payload = words[*at..*at + len].to_vec();
    *at += len;
    payload
}

/// Hosts of the grid ids a payload mentions, plus the sender's own
/// host. Shipped as id words so the receiving host learns them under
/// the ordinary knowledge rule.
fn directory(src: u64, payload: &[Word], all_vids: &BTreeSet<u64>) -> Vec<Word> {
    let mut hosts = BTreeSet::new();
    hosts.insert(host_of_vid(src));
    for w in payload {
        if let Word::Id(v) = w {
            if all_vids.contains(v) {
                hosts.insert(host_of_vid(*v));
            }
        }
    }
    let mut out = Vec::with_capacity(hosts.len() + 1);
    out.push(Word::Int(hosts.len() as i64));
    out.extend(hosts.into_iter().map(Word::Id));
    out
}

fn encode_path(
    key: EdgeKey,
    toward_hi: bool,
    src: u64,
    dst: u64,
    seq: i64,
    payload: &[Word],
    all_vids: &BTreeSet<u64>,
) -> Vec<Word> {
    let mut out = vec![
        Word::Int(TAG_PATH),
        Word::Cell(key.0),
        Word::Cell(key.1),
        Word::Int(toward_hi as i64),
        Word::Int(src as i64),
        Word::Int(dst as i64),
        Word::Int(seq),
    ];
    out.extend(directory(src, payload, all_vids));
    out.push(Word::Int(payload.len() as i64));
    out.extend_from_slice(payload);
    out
}

fn encode_glob(
    src: u64,
    dst: u64,
    seq: i64,
    payload: &[Word],
    all_vids: &BTreeSet<u64>,
) -> Vec<Word> {
    let mut out = vec![
        Word::Int(TAG_GLOB),
        Word::Int(src as i64),
        Word::Int(dst as i64),
        Word::Int(seq),
    ];
    out.extend(directory(src, payload, all_vids));
    out.push(Word::Int(payload.len() as i64));
    out.extend_from_slice(payload);
    out
}

/// One host and the programs of its grid nodes, assembled for a run.
struct HostView<'a, P> {
    st: &'a mut HostState,
    programs: &'a mut [P],
    shared: &'a Shared,
}

impl<P: NodeProgram> HostView<'_, P> {
    fn fail(&mut self, e: AdapterError) {
        if self.st.error.is_none() {
            self.st.error = Some(e);
        }
    }

    /// Files one record for path forwarding, either starting it or
    /// relaying it onward.
    fn relay(&mut self, key: EdgeKey, toward_hi: bool, words: &[Word], out: &mut BTreeMap<NodeId, Vec<Word>>) {
        match self.st.next_hops.get(&(key, toward_hi)) {
            Some(&hop) => out.entry(hop).or_default().extend_from_slice(words),
            None => self.fail(AdapterError::MissingPathState {
                host: self.st.id,
                lo: key.0,
                hi: key.1,
            }),
        }
    }

    fn accept(&mut self, dst: u64, msg: GammaMsg) {
        debug_assert_eq!(host_of_vid(dst), self.st.id);
        self.st.inbox_next.entry(dst).or_default().push(msg);
    }

    /// Absorbs one host-level message, delivering records addressed
    /// here and queueing the rest for forwarding.
    fn absorb(&mut self, m: &Message, relay_now: &mut BTreeMap<NodeId, Vec<Word>>) {
        for (rec, span) in parse_records(&m.payload) {
            match rec {
                Record::Path {
                    key,
                    toward_hi,
                    src,
                    dst,
                    seq,
                    payload,
                } => {
                    if host_of_vid(dst) == self.st.id {
                        self.accept(
                            dst,
                            GammaMsg {
                                src,
                                seq,
                                channel: Channel::Local,
                                payload: Arc::new(payload),
                            },
                        );
                    } else {
                        self.relay(key, toward_hi, &m.payload[span], relay_now);
                    }
                }
                Record::Glob {
                    src, dst, seq, payload, ..
                } => self.accept(
                    dst,
                    GammaMsg {
                        src,
                        seq,
                        channel: Channel::Global,
                        payload: Arc::new(payload),
                    },
                ),
            }
        }
    }

    /// Sends a grid-local message: internally when both ends share this
    /// host, otherwise as a path packet over the representation path.
    fn put_local(
        &mut self,
        src: u64,
        dst: u64,
        payload: &Arc<Vec<Word>>,
        relay_now: &mut BTreeMap<NodeId, Vec<Word>>,
    ) {
        let seq = self.st.seq;
        self.st.seq += 1;
        if host_of_vid(dst) == self.st.id {
            self.accept(
                dst,
                GammaMsg {
                    src,
                    seq,
                    channel: Channel::Local,
                    payload: Arc::clone(payload),
                },
            );
            return;
        }
        let (ca, cb) = (self.st.cell_of[&src], self.st.cell_of[&dst]);
        let key = edge_key(ca, cb);
        let words = encode_path(
            key,
            cb == key.1,
            src,
            dst,
            seq,
            payload,
            &self.shared.all_vids,
        );
        self.relay(key, cb == key.1, &words, relay_now);
    }

    fn put_global(&mut self, src: u64, dst: u64, payload: &Arc<Vec<Word>>) {
        let seq = self.st.seq;
        self.st.seq += 1;
        if host_of_vid(dst) == self.st.id {
            self.accept(
                dst,
                GammaMsg {
                    src,
                    seq,
                    channel: Channel::Global,
                    payload: Arc::clone(payload),
                },
            );
            return;
        }
        let words = encode_glob(src, dst, seq, payload, &self.shared.all_vids);
        self.st
            .global_out
            .entry(host_of_vid(dst))
            .or_default()
            .push_back(words);
    }

    /// Rotates delivered messages in, runs every hosted program, and
    /// validates its output under the grid channel rules.
    fn run_gamma(&mut self, gamma_round: u64, relay_now: &mut BTreeMap<NodeId, Vec<Word>>) {
        // One rotation for the whole host before any program runs, so a
        // message between two ids on this host still takes a full grid
        // round.
        let mut now = std::mem::take(&mut self.st.inbox_next);
        for (i, &vid) in self.st.vids.clone().iter().enumerate() {
            let mut msgs = now.remove(&vid).unwrap_or_default();
            msgs.sort_by_key(|m| (m.src, m.seq));
            let knows = self.st.knows.get_mut(&vid).expect("hosted id");
            for m in &msgs {
                knows.insert(m.src);
                for w in m.payload.iter() {
                    if let Word::Id(v) = w {
                        if self.shared.all_vids.contains(v) {
                            knows.insert(*v);
                        }
                    }
                }
            }
            let inbox: Vec<Message> = msgs
                .into_iter()
                .map(|m| Message {
                    src: m.src,
                    dst: vid,
                    channel: m.channel,
                    payload: m.payload,
                })
                .collect();
            let adj = self.st.grid_adj[&vid].clone();
            let ctx = NodeCtx {
                id: vid,
                round: gamma_round,
                neighbors: &adj,
                n: self.shared.n_gamma,
                global_budget: self.shared.gamma_budget,
                local_mode: self.shared.gamma_mode,
            };
            let mut out = Outbox::new();
            self.programs[i].on_round(&ctx, &inbox, &mut out);

            let mut globals_used = 0usize;
            let mut local_dsts: BTreeSet<u64> = BTreeSet::new();
            let mut local_broadcast = false;
            for (channel, spec, payload) in out.drain_sends() {
                if payload.len() > self.shared.gamma_w_max {
                    self.fail(AdapterError::GridOversizedPayload {
                        vid,
                        gamma_round,
                        len: payload.len(),
                        w_max: self.shared.gamma_w_max,
                    });
                    return;
                }
                match (channel, spec) {
                    (Channel::Local, DstSpec::AllNeighbors) => {
                        if local_broadcast || !local_dsts.is_empty() {
                            self.fail(AdapterError::GridBroadcastRestriction { vid, gamma_round });
                            return;
                        }
                        local_broadcast = true;
                        for &nb in &adj {
                            self.put_local(vid, nb, &payload, relay_now);
                        }
                    }
                    (Channel::Local, DstSpec::Node(dst)) => {
                        if self.shared.gamma_mode == LocalMode::Broadcast || local_broadcast {
                            self.fail(AdapterError::GridBroadcastRestriction { vid, gamma_round });
                            return;
                        }
                        if !adj.contains(&dst) {
                            self.fail(AdapterError::GridUnknownDestination {
                                vid,
                                dst,
                                gamma_round,
                            });
                            return;
                        }
                        if !local_dsts.insert(dst) {
                            self.fail(AdapterError::GridLocalCapacityExceeded {
                                vid,
                                dst,
                                gamma_round,
                            });
                            return;
                        }
                        self.put_local(vid, dst, &payload, relay_now);
                    }
                    (Channel::Global, DstSpec::Node(dst)) => {
                        if !self.shared.all_vids.contains(&dst)
                            || !self.st.knows[&vid].contains(&dst)
                        {
                            self.fail(AdapterError::GridUnknownDestination {
                                vid,
                                dst,
                                gamma_round,
                            });
                            return;
                        }
                        globals_used += 1;
                        if globals_used > self.shared.gamma_budget {
                            self.fail(AdapterError::GridBudgetExceeded {
                                vid,
                                gamma_round,
                                budget: self.shared.gamma_budget,
                            });
                            return;
                        }
                        self.put_global(vid, dst, &payload);
                    }
                    (Channel::Global, DstSpec::AllNeighbors) => unreachable!(),
                }
            }
        }
    }

    /// Emits up to the host send cap of queued global packets, one
    /// combined message per destination host.
    fn drain_globals(&mut self, budget: usize, out: &mut Outbox) {
        let dsts: Vec<NodeId> = self.st.global_out.keys().copied().collect();
        let mut sent = 0usize;
        for dst in dsts {
            if sent == budget {
                break;
            }
            let q = self.st.global_out.get_mut(&dst).expect("queued dst");
            let mut words: Vec<Word> = Vec::new();
            while let Some(rec) = q.front() {
                if !words.is_empty() && words.len() + rec.len() > self.shared.udg_w_max {
                    break;
                }
                let rec = q.pop_front().unwrap();
                words.extend(rec);
            }
            if q.is_empty() {
                self.st.global_out.remove(&dst);
            }
            out.send_global(dst, words);
            sent += 1;
        }
    }
}

impl<P: NodeProgram> NodeProgram for HostView<'_, P> {
    fn on_round(&mut self, ctx: &NodeCtx, inbox: &[Message], out: &mut Outbox) {
        let offset = ctx.round % ADAPTER_WINDOW;
        let gamma_round = ctx.round / ADAPTER_WINDOW;
        let mut relay_now: BTreeMap<NodeId, Vec<Word>> = BTreeMap::new();
        for m in inbox {
            self.absorb(m, &mut relay_now);
        }
        if offset == 0 {
            self.run_gamma(gamma_round, &mut relay_now);
        }
        debug_assert!(
            relay_now.is_empty() || offset <= LAST_RELAY_OFFSET,
            "path packet past the relay offsets"
        );
        for (hop, words) in relay_now {
            if words.len() > self.shared.udg_w_max {
                self.fail(AdapterError::RelayOverflow {
                    host: self.st.id,
                    len: words.len(),
                    w_max: self.shared.udg_w_max,
                });
                continue;
            }
            out.send_local(hop, words);
        }
        if offset > LAST_RELAY_OFFSET {
            self.drain_globals(ctx.global_budget, out);
            if offset == ADAPTER_WINDOW - 1 && !self.st.global_out.is_empty() {
                self.fail(AdapterError::BudgetExceeded {
                    host: self.st.id,
                    gamma_round,
                });
            }
        }
    }

    fn idle(&self) -> bool {
        self.st.drained() && self.programs.iter().all(NodeProgram::idle)
    }
}

/// Hosted execution environment for grid-level programs.
///
/// The host network and the per-id state (knowledge, pending inboxes,
/// outbound queues) persist across [`run_stage`](Self::run_stage)
/// calls, so successive protocol stages compose exactly as they would
/// on a directly simulated grid network.
pub struct GridRoundAdapter {
    net: SimNetwork,
    state: Vec<HostState>,
    spans: Vec<(usize, usize)>,
    vids: Vec<u64>,
    shared: Shared,
}

impl GridRoundAdapter {
    pub fn new(
        udg: &UdgInstance,
        build: &GridBuild,
        cfg: &AdapterConfig,
    ) -> Result<Self, AdapterError> {
        if 2 * cfg.gamma_w_max + 10 > cfg.udg_w_max {
            return Err(AdapterError::Setup(format!(
                "grid messages of {} words do not fit host messages of {} words",
                cfg.gamma_w_max, cfg.udg_w_max
            )));
        }
        let ids: Vec<NodeId> = udg.ids().to_vec();
        let edges: Vec<(NodeId, NodeId)> = udg
            .edges()
            .iter()
            .map(|&(u, v)| (udg.id(u), udg.id(v)))
            .collect();
        let sim_cfg = SimConfig {
            local_mode: LocalMode::Unicast,
            gamma: cfg.gamma,
            w_max: cfg.udg_w_max,
            trace: cfg.trace,
            shuffle_seed: None,
        };
        let mut net = SimNetwork::new(&ids, &edges, sim_cfg)?;

        let mut vids: Vec<u64> = build.cell_of_vid.keys().copied().collect();
        vids.sort_unstable();
        let all_vids: BTreeSet<u64> = vids.iter().copied().collect();
        let cell_adj = build.grid_adjacency();
        let shared = Shared {
            n_gamma: vids.len(),
            gamma_budget: global_budget(vids.len(), cfg.gamma),
            gamma_w_max: cfg.gamma_w_max,
            gamma_mode: cfg.gamma_local_mode,
            udg_w_max: cfg.udg_w_max,
            all_vids,
        };

        let mut state = Vec::with_capacity(ids.len());
        let mut spans = Vec::with_capacity(ids.len());
        let mut at = 0usize;
        let host_ids: Vec<NodeId> = net.ids().to_vec();
        for id in host_ids {
            let hosted: Vec<u64> = vids[at..]
                .iter()
                .take_while(|&&v| host_of_vid(v) == id)
                .copied()
                .collect();
            let span = (at, at + hosted.len());
            at = span.1;
            let mut grid_adj = BTreeMap::new();
            let mut cell_of = BTreeMap::new();
            let mut knows = BTreeMap::new();
            let mut neighbor_hosts: BTreeSet<NodeId> = BTreeSet::new();
            for &v in &hosted {
                let cell = build.cell_of_vid[&v];
                cell_of.insert(v, cell);
                let mut adj = Vec::new();
                for &nc in cell_adj.get(&cell).map(Vec::as_slice).unwrap_or(&[]) {
                    let nv = build.vid_of_cell[&nc];
                    cell_of.insert(nv, nc);
                    neighbor_hosts.insert(host_of_vid(nv));
                    adj.push(nv);
                }
                adj.sort_unstable();
                let mut known: BTreeSet<u64> = adj.iter().copied().collect();
                known.insert(v);
                knows.insert(v, known);
                grid_adj.insert(v, adj);
            }
            // The construction wave already taught each representative
            // which hosts carry its grid neighbors; mirror that here.
            let learned: Vec<NodeId> = neighbor_hosts.into_iter().collect();
            net.seed_knowledge(id, &learned);
            state.push(HostState {
                id,
                vids: hosted,
                grid_adj,
                cell_of,
                next_hops: build.next_hops.get(&id).cloned().unwrap_or_default(),
                knows,
                inbox_next: BTreeMap::new(),
                global_out: BTreeMap::new(),
                seq: 0,
                error: None,
            });
            spans.push(span);
        }
        if at != vids.len() {
            return Err(AdapterError::Setup(format!(
                "{} virtual ids have no host", vids.len() - at
            )));
        }
        Ok(GridRoundAdapter {
            net,
            state,
            spans,
            vids,
            shared,
        })
    }

    /// Virtual ids, ascending. Program slices follow this order.
    pub fn vids(&self) -> &[u64] {
        &self.vids
    }

    pub fn gamma_rounds(&self) -> u64 {
        self.net.round() / ADAPTER_WINDOW
    }

    pub fn udg_rounds(&self) -> u64 {
        self.net.round()
    }

    pub fn net(&self) -> &SimNetwork {
        &self.net
    }

    pub fn reports(&self) -> &[RoundReport] {
        self.net.reports()
    }

    fn with_views<P: NodeProgram, T>(
        &mut self,
        programs: &mut [P],
        f: impl FnOnce(&mut SimNetwork, &mut [HostView<'_, P>]) -> T,
    ) -> T {
        assert_eq!(programs.len(), self.vids.len(), "one program per grid node");
        let mut views = Vec::with_capacity(self.state.len());
        let mut rest = programs;
        for (st, &(a, b)) in self.state.iter_mut().zip(&self.spans) {
            let (chunk, tail) = rest.split_at_mut(b - a);
            rest = tail;
            views.push(HostView {
                st,
                programs: chunk,
                shared: &self.shared,
            });
        }
        f(&mut self.net, &mut views)
    }

    fn first_error(&mut self) -> Option<AdapterError> {
        self.state.iter_mut().find_map(|st| st.error.take())
    }

    /// Runs exactly `windows` grid rounds.
    pub fn run_windows<P: NodeProgram>(
        &mut self,
        programs: &mut [P],
        windows: u64,
    ) -> Result<(), AdapterError> {
        debug_assert_eq!(self.net.round() % ADAPTER_WINDOW, 0);
        for _ in 0..windows {
            self.with_views(programs, |net, views| {
                for _ in 0..ADAPTER_WINDOW {
                    net.run_round(views)?;
                }
                Ok::<_, SimError>(())
            })?;
            if let Some(e) = self.first_error() {
                return Err(e);
            }
        }
        Ok(())
    }

    /// True when no grid message is pending, queued, or in flight and
    /// every program is idle.
    pub fn quiescent<P: NodeProgram>(&self, programs: &[P]) -> bool {
        self.net.pending_messages() == 0
            && self.state.iter().all(HostState::drained)
            && programs.iter().all(NodeProgram::idle)
    }

    /// Runs grid rounds until quiescence, returning how many ran.
    /// Exceeding `cap` grid rounds is an error.
    pub fn run_stage<P: NodeProgram>(
        &mut self,
        programs: &mut [P],
        cap: u64,
    ) -> Result<u64, AdapterError> {
        let mut executed = 0u64;
        loop {
            if self.quiescent(programs) {
                return Ok(executed);
            }
            if executed == cap {
                return Err(AdapterError::RoundLimitExceeded { limit: cap });
            }
            self.run_windows(programs, 1)?;
            executed += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_udg, compute_active_cells, Point};
    use crate::grid::{build_grid, BuildOptions};

    fn build(points: &[(f64, f64)]) -> (UdgInstance, GridBuild) {
        let nodes: Vec<(NodeId, Point)> = points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| (i as NodeId, Point::new(x, y)))
            .collect();
        let udg = build_udg(&nodes).unwrap();
        let map = compute_active_cells(&udg);
        let grid = build_grid(&udg, &map, &BuildOptions::default()).unwrap();
        (udg, grid)
    }

    /// Sends one fixed payload to chosen destinations in round 0 and
    /// records everything it receives.
    #[derive(Default)]
    struct Courier {
        to_local: Vec<u64>,
        to_global: Vec<u64>,
        broadcast: bool,
        sent: bool,
        got: Vec<(u64, Channel, Vec<Word>)>,
    }

    impl NodeProgram for Courier {
        fn on_round(&mut self, ctx: &NodeCtx, inbox: &[Message], out: &mut Outbox) {
            for m in inbox {
                self.got.push((m.src, m.channel, m.payload.to_vec()));
            }
            if !self.sent {
                self.sent = true;
                if self.broadcast {
                    out.broadcast_local(vec![Word::Int(42), Word::Id(ctx.id)]);
                } else {
                    for &d in &self.to_local {
                        out.send_local(d, vec![Word::Int(42), Word::Id(ctx.id)]);
                    }
                }
                for &d in &self.to_global {
                    out.send_global(d, vec![Word::Int(7), Word::Id(ctx.id)]);
                }
            }
        }

        fn idle(&self) -> bool {
            self.sent
        }
    }

    fn couriers(n: usize) -> Vec<Courier> {
        (0..n).map(|_| Courier::default()).collect()
    }

    #[test]
    fn window_advances_only_the_clock_without_traffic() {
        let (udg, grid) = build(&[(0.1, 0.1), (0.75, 0.1)]);
        let mut ad = GridRoundAdapter::new(&udg, &grid, &AdapterConfig::default()).unwrap();
        let mut programs = couriers(ad.vids().len());
        for p in &mut programs {
            p.sent = true;
        }
        ad.run_windows(&mut programs, 1).unwrap();
        assert_eq!(ad.udg_rounds(), ADAPTER_WINDOW);
        assert_eq!(ad.gamma_rounds(), 1);
        for r in ad.reports() {
            assert_eq!(r.local_messages + r.global_messages, 0);
        }
    }

    #[test]
    fn two_cell_message_arrives_within_three_udg_rounds() {
        let (udg, grid) = build(&[(0.1, 0.1), (0.75, 0.1)]);
        let mut ad = GridRoundAdapter::new(&udg, &grid, &AdapterConfig::default()).unwrap();
        let vids = ad.vids().to_vec();
        assert_eq!(vids.len(), 2);
        let mut programs = couriers(2);
        programs[0].to_local = vec![vids[1]];
        programs[1].sent = true;
        let rounds = ad.run_stage(&mut programs, 5).unwrap();
        assert_eq!(rounds, 2);
        assert_eq!(
            programs[1].got,
            vec![(vids[0], Channel::Local, vec![Word::Int(42), Word::Id(vids[0])])]
        );
        let hops: Vec<u64> = ad
            .reports()
            .iter()
            .filter(|r| r.local_messages > 0)
            .map(|r| r.round)
            .collect();
        assert!(!hops.is_empty() && hops.iter().all(|&r| r < 3));
    }

    #[test]
    fn four_neighbor_broadcast_lands_in_one_window() {
        let mut pts = vec![(0.5, 0.5)];
        for (dx, dy) in [(0.9, 0.0), (-0.9, 0.0), (0.0, 0.9), (0.0, -0.9)] {
            pts.push((0.5 + dx, 0.5 + dy));
        }
        let (udg, grid) = build(&pts);
        let center = grid.vid(crate::geometry::cell_of(Point::new(0.5, 0.5)));
        let mut ad = GridRoundAdapter::new(&udg, &grid, &AdapterConfig::default()).unwrap();
        let vids = ad.vids().to_vec();
        let ci = vids.iter().position(|&v| v == center).unwrap();
        let mut programs = couriers(vids.len());
        for (i, p) in programs.iter_mut().enumerate() {
            p.sent = i != ci;
        }
        programs[ci].sent = false;
        programs[ci].broadcast = true;
        ad.run_stage(&mut programs, 5).unwrap();

        let nbs: Vec<u64> = grid
            .grid_adjacency()
            .get(&grid.cell_of_vid[&center])
            .unwrap()
            .iter()
            .map(|c| grid.vid(*c))
            .collect();
        assert_eq!(nbs.len(), 4);
        for nb in nbs {
            let i = vids.iter().position(|&v| v == nb).unwrap();
            assert_eq!(
                programs[i].got,
                vec![(center, Channel::Local, vec![Word::Int(42), Word::Id(center)])]
            );
        }
        for r in ad.reports().iter().filter(|r| r.round >= ADAPTER_WINDOW) {
            assert_eq!(r.local_messages + r.global_messages, 0);
        }
    }

    #[test]
    fn global_send_rides_the_drain_slots() {
        let (udg, grid) = build(&[(0.1, 0.1), (0.75, 0.1)]);
        let mut ad = GridRoundAdapter::new(&udg, &grid, &AdapterConfig::default()).unwrap();
        let vids = ad.vids().to_vec();
        let mut programs = couriers(2);
        // Grid neighbors are known from the start, so a global send to
        // one is legal in round 0.
        programs[0].to_global = vec![vids[1]];
        programs[1].sent = true;
        ad.run_stage(&mut programs, 5).unwrap();
        assert_eq!(
            programs[1].got,
            vec![(vids[0], Channel::Global, vec![Word::Int(7), Word::Id(vids[0])])]
        );
        let slots: Vec<u64> = ad
            .reports()
            .iter()
            .filter(|r| r.global_messages > 0)
            .map(|r| r.round % ADAPTER_WINDOW)
            .collect();
        assert_eq!(slots.len(), 1);
        assert!(slots[0] > LAST_RELAY_OFFSET);
    }

    #[test]
    fn grid_budget_violation_is_reported_on_the_virtual_id() {
        let mut pts = vec![(0.5, 0.5)];
        for (dx, dy) in [(0.9, 0.0), (-0.9, 0.0), (0.0, 0.9), (0.0, -0.9)] {
            pts.push((0.5 + dx, 0.5 + dy));
        }
        let (udg, grid) = build(&pts);
        let center = grid.vid(crate::geometry::cell_of(Point::new(0.5, 0.5)));
        let mut ad = GridRoundAdapter::new(&udg, &grid, &AdapterConfig::default()).unwrap();
        let vids = ad.vids().to_vec();
        let budget = global_budget(vids.len(), 1.0);
        let ci = vids.iter().position(|&v| v == center).unwrap();
        let mut programs = couriers(vids.len());
        for (i, p) in programs.iter_mut().enumerate() {
            p.sent = i != ci;
        }
        let nbs: Vec<u64> = grid.grid_adjacency()[&grid.cell_of_vid[&center]]
            .iter()
            .map(|c| grid.vid(*c))
            .collect();
        let mut to_global = Vec::new();
        while to_global.len() <= budget {
            to_global.extend(nbs.iter().copied());
        }
        programs[ci].to_global = to_global;
        let err = ad.run_windows(&mut programs, 1).unwrap_err();
        assert_eq!(
            err,
            AdapterError::GridBudgetExceeded {
                vid: center,
                gamma_round: 0,
                budget,
            }
        );
    }

    #[test]
    fn oversized_grid_payload_is_rejected() {
        let (udg, grid) = build(&[(0.1, 0.1), (0.75, 0.1)]);
        let cfg = AdapterConfig {
            gamma_w_max: 4,
            ..AdapterConfig::default()
        };
        struct Fat;
        impl NodeProgram for Fat {
            fn on_round(&mut self, ctx: &NodeCtx, _inbox: &[Message], out: &mut Outbox) {
                if ctx.id == 0 {
                    out.broadcast_local(vec![Word::Int(0); 5]);
                }
            }
        }
        let mut ad = GridRoundAdapter::new(&udg, &grid, &cfg).unwrap();
        let mut programs = vec![Fat, Fat];
        let err = ad.run_windows(&mut programs, 1).unwrap_err();
        assert_eq!(
            err,
            AdapterError::GridOversizedPayload {
                vid: 0,
                gamma_round: 0,
                len: 5,
                w_max: 4,
            }
        );
    }

    #[test]
    fn hosted_run_matches_direct_grid_simulation() {
        let udg = crate::testutil::random_connected_instance(11, 60);
        let map = compute_active_cells(&udg);
        let grid = build_grid(&udg, &map, &BuildOptions::default()).unwrap();

        // Greet neighbors locally, then answer each greeting globally.
        #[derive(Default)]
        struct Echo {
            greeted: bool,
            answered: BTreeSet<u64>,
            replies: Vec<(u64, i64)>,
            pending: Vec<u64>,
        }
        impl NodeProgram for Echo {
            fn on_round(&mut self, ctx: &NodeCtx, inbox: &[Message], out: &mut Outbox) {
                for m in inbox {
                    match m.channel {
                        Channel::Local => {
                            if self.answered.insert(m.src) {
                                self.pending.push(m.src);
                            }
                        }
                        Channel::Global => {
                            self.replies.push((m.src, m.payload[0].as_int().unwrap()));
                        }
                    }
                }
                if !self.greeted {
                    self.greeted = true;
                    out.broadcast_local(vec![Word::Id(ctx.id)]);
                }
                for d in self.pending.drain(..) {
                    out.send_global(d, vec![Word::Int(ctx.id as i64 + 1000)]);
                }
            }
            fn idle(&self) -> bool {
                self.greeted && self.pending.is_empty()
            }
        }

        let vids: Vec<u64> = grid.cell_of_vid.keys().copied().collect();
        let cell_adj = grid.grid_adjacency();
        let mut edges = Vec::new();
        for (&c, nbs) in &cell_adj {
            for nb in nbs {
                if grid.vid(c) < grid.vid(*nb) {
                    edges.push((grid.vid(c), grid.vid(*nb)));
                }
            }
        }
        let mut net = SimNetwork::new(
            &vids,
            &edges,
            SimConfig {
                w_max: 4096,
                ..SimConfig::default()
            },
        )
        .unwrap();
        let mut direct: Vec<Echo> = vids.iter().map(|_| Echo::default()).collect();
        let direct_rounds = net.run_until(&mut direct, 64, SimNetwork::quiescent).unwrap();

        let mut ad = GridRoundAdapter::new(&udg, &grid, &AdapterConfig::default()).unwrap();
        assert_eq!(ad.vids(), &vids[..]);
        let mut hosted: Vec<Echo> = vids.iter().map(|_| Echo::default()).collect();
        let hosted_rounds = ad.run_stage(&mut hosted, 64).unwrap();

        assert_eq!(hosted_rounds, direct_rounds);
        assert_eq!(ad.udg_rounds(), hosted_rounds * ADAPTER_WINDOW);
        for (d, h) in direct.iter().zip(&hosted) {
            let mut dr = d.replies.clone();
            let mut hr = h.replies.clone();
            dr.sort_unstable();
            hr.sort_unstable();
            assert_eq!(dr, hr);
            assert_eq!(d.answered, h.answered);
        }
    }
}
