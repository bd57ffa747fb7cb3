//! Distributed election of cell representatives.
//!
//! Every active cell elects one nearby graph node as its representative. A
//! node is a *candidate* of a cell when it is a vertex of a triangle
//! containing the cell center (primary candidacy) or an endpoint of an edge
//! intersecting the cell (secondary). The winner is the best candidate under
//! the order: primary before secondary, then smaller distance to the cell
//! center, then smaller id.
//!
//! The protocol is three rounds of local broadcast. Candidates of a cell
//! form a connected subgraph of diameter at most three, so flooding the
//! current best tuple through candidates for three rounds reaches everyone.
//! Each node broadcasts tuples only for cells of its own candidacy, which
//! keeps every per-cell flood inside that cell's candidate set.

use std::collections::BTreeMap;

use crate::geometry::{CellCoord, NodeId, Point};
use crate::sim::{Message, NodeCtx, NodeProgram, Outbox, Word};

/// One candidate's claim on a cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Claim {
    pub primary: bool,
    pub id: NodeId,
    pub pos: Point,
}

impl Claim {
    /// Whether this claim beats `other` for the cell with center `center`.
    /// Distances compare exactly; all nodes derive them from the same
    /// coordinates, so the outcome is identical everywhere.
    fn beats(&self, other: &Claim, center: Point) -> bool {
        if self.primary != other.primary {
            return self.primary;
        }
        let (a, b) = (self.pos.dist2(&center), other.pos.dist2(&center));
        if a != b {
            return a < b;
        }
        self.id < other.id
    }
}

/// Number of broadcast rounds in the election schedule.
pub const ELECTION_ROUNDS: u64 = 3;

/// Per-node election program.
pub struct ElectionProgram {
    id: NodeId,
    /// Cells this node is a candidate for, with the primary flag.
    candidacy: BTreeMap<CellCoord, bool>,
    best: BTreeMap<CellCoord, Claim>,
    rounds_seen: u64,
}

impl ElectionProgram {
    pub fn new(id: NodeId, pos: Point, candidacy: BTreeMap<CellCoord, bool>) -> Self {
        let best = candidacy
            .iter()
            .map(|(&cell, &primary)| (cell, Claim { primary, id, pos }))
            .collect();
        ElectionProgram {
            id,
            candidacy,
            best,
            rounds_seen: 0,
        }
    }

    /// Best claim known for each candidacy cell after the protocol ran.
    pub fn results(&self) -> &BTreeMap<CellCoord, Claim> {
        &self.best
    }

    /// Cells this node won.
    pub fn won_cells(&self) -> Vec<CellCoord> {
        self.best
            .iter()
            .filter(|(_, c)| c.id == self.id)
            .map(|(&cell, _)| cell)
            .collect()
    }

    fn merge(&mut self, cell: CellCoord, claim: Claim) {
        if let Some(cur) = self.best.get_mut(&cell) {
            if claim.beats(cur, cell.center()) {
                *cur = claim;
            }
        }
    }
}

const WORDS_PER_TUPLE: usize = 4;

impl NodeProgram for ElectionProgram {
    fn on_round(&mut self, _ctx: &NodeCtx, inbox: &[Message], out: &mut Outbox) {
        for m in inbox {
            for t in m.payload.chunks_exact(WORDS_PER_TUPLE) {
                let (cell, id, pos, primary) = match (t[0], t[1], t[2], t[3]) {
                    (Word::Cell(c), Word::Id(i), Word::Pt(p), Word::Int(f)) => (c, i, p, f != 0),
                    _ => continue,
                };
                if self.candidacy.contains_key(&cell) {
                    self.merge(cell, Claim { primary, id, pos });
                }
            }
        }
        if self.rounds_seen < ELECTION_ROUNDS && !self.candidacy.is_empty() {
            let mut words = Vec::with_capacity(self.best.len() * WORDS_PER_TUPLE);
            for (&cell, claim) in &self.best {
                words.push(Word::Cell(cell));
                words.push(Word::Id(claim.id));
                words.push(Word::Pt(claim.pos));
                words.push(Word::Int(claim.primary as i64));
            }
            out.broadcast_local(words);
        }
        self.rounds_seen += 1;
    }

    fn idle(&self) -> bool {
        self.rounds_seen >= ELECTION_ROUNDS || self.candidacy.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn claim_order_prefers_primary_then_distance_then_id() {
        let center = Point::new(0.0, 0.0);
        let near = Point::new(0.1, 0.0);
        let far = Point::new(0.3, 0.0);
        let p = |primary, id, pos| Claim { primary, id, pos };
        assert!(p(true, 9, far).beats(&p(false, 1, near), center));
        assert!(p(false, 9, near).beats(&p(false, 1, far), center));
        assert!(p(false, 1, near).beats(&p(false, 9, near), center));
        assert!(!p(false, 9, near).beats(&p(false, 1, near), center));
    }
}
