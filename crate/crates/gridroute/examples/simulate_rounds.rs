//! Drive the round-synchronous simulator directly with a small program:
//! flood the minimum id over the local channel, then have the winner
//! announce itself to its neighbors over the global channel.
//!
//! Demonstrates the two channels, the per-round global budget, message
//! delivery one round after sending, and idle-based termination.

use gridroute::sim::{
    LocalMode, Message, NodeCtx, NodeProgram, Outbox, SimConfig, SimNetwork, Word,
};

struct MinFlood {
    id: u64,
    best: u64,
    dirty: bool,
    announced: bool,
}

impl NodeProgram for MinFlood {
    fn on_round(&mut self, ctx: &NodeCtx, inbox: &[Message], out: &mut Outbox) {
        for msg in inbox {
            if let Some(v) = msg.payload.first().and_then(Word::as_id) {
                if v < self.best {
                    self.best = v;
                    self.dirty = true;
                }
            }
        }
        if self.dirty {
            self.dirty = false;
            out.broadcast_local(vec![Word::Id(self.best)]);
        }
        // Once the flood has had time to settle, the winner spends part
        // of its global budget announcing itself.
        if !self.announced && self.best == self.id && ctx.round >= 6 {
            self.announced = true;
            let mut sent = 0;
            for &other in ctx.neighbors {
                if sent == ctx.global_budget {
                    break;
                }
                out.send_global(other, vec![Word::Int(-1)]);
                sent += 1;
            }
        }
    }

    fn idle(&self) -> bool {
        !self.dirty && (self.best != self.id || self.announced)
    }
}

fn main() {
    // A ring of eight nodes with deliberately unsorted ids.
    let ids = [40u64, 17, 93, 5, 61, 28, 74, 52];
    let edges: Vec<(u64, u64)> = (0..ids.len())
        .map(|i| (ids[i], ids[(i + 1) % ids.len()]))
        .collect();

    let cfg = SimConfig {
        local_mode: LocalMode::Broadcast,
        w_max: 4,
        ..SimConfig::default()
    };
    let mut net = SimNetwork::new(&ids, &edges, cfg).unwrap();
    println!("nodes: {}, global budget: {} sends/round", net.n(), net.global_budget());

    let mut programs: Vec<MinFlood> = ids
        .iter()
        .map(|&id| MinFlood { id, best: id, dirty: true, announced: false })
        .collect();

    let rounds = net
        .run_until(&mut programs, 64, |net, progs| {
            net.pending_messages() == 0 && progs.iter().all(|p| p.idle())
        })
        .unwrap();

    println!("converged after {rounds} rounds");
    for p in &programs {
        assert_eq!(p.best, 5, "every node agrees on the minimum");
    }
    println!("node 5 won and announced over the global channel");
    for report in net.reports() {
        println!(
            "round {:>2}: local {:>2} messages, global {:>2}",
            report.round, report.local_messages, report.global_messages
        );
    }
}
