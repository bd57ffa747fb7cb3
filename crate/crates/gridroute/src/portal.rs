//! Portals, the grid spanning tree, and the interval labelling.
//!
//! A *portal* is a maximal vertical run of active cells. The grid spanning
//! tree contains every vertical grid edge, plus one horizontal edge per
//! adjacent portal pair, selected by a local rule: a cell adds the edge to
//! its western neighbor exactly when its southern neighbor is inactive or
//! has no western grid edge. On hole-free active sets this yields a tree.
//!
//! Labels come from an Euler tour of that tree. Each node `v` owns one tour
//! slot per tree edge; slots are indexed by the node's tree neighbors in
//! ascending virtual id order, and the tour successor of slot `j` of `u` is
//! the slot of `v = u(j)` just before `u` in `v`'s cyclic order. The tour
//! starts at slot 0 of the minimum-id node (the root). Preorder numbers
//! `l_v` follow first visits along the tour; `r_v` is the largest preorder
//! number in the subtree of `v`, obtained as the number of first visits up
//! to `v`'s last slot. A node's interval is `[l_v, r_v]`; its portal
//! interval is the interval of the portal's *leader*, the member with the
//! smallest preorder number (equivalently the shallowest member, since a
//! portal is a tree path hanging from it).
//!
//! Everything here is centralized; it both defines the reference semantics
//! and verifies the distributed labelling, which must reproduce these
//! labels exactly.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::CellCoord;

/// Interval label of a grid node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeLabel {
    /// Preorder number (1-based).
    pub l: u64,
    /// Largest preorder number in the subtree.
    pub r: u64,
    /// Preorder number of the portal leader.
    pub pl: u64,
    /// Largest preorder number in the portal leader's subtree.
    pub pr: u64,
}

impl NodeLabel {
    /// Own interval `[l, r]`.
    pub fn own(&self) -> (u64, u64) {
        (self.l, self.r)
    }

    /// Portal interval `[pl, pr]`.
    pub fn portal(&self) -> (u64, u64) {
        (self.pl, self.pr)
    }
}

/// Errors from tree construction and labelling.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PortalError {
    #[error("the selected grid edges contain a cycle (active cells enclose a hole)")]
    CycleDetected,
    #[error("the active cells are not connected by the selected edges")]
    Disconnected,
}

/// Maximal vertical runs of active cells, ascending by column then row.
pub fn compute_portals(active: &BTreeSet<CellCoord>) -> Vec<Vec<CellCoord>> {
    let mut out = Vec::new();
    for &cell in active {
        let south = cell.offset(0, -1);
        if active.contains(&south) {
            continue;
        }
        let mut run = vec![cell];
        let mut cur = cell.offset(0, 1);
        while active.contains(&cur) {
            run.push(cur);
            cur = cur.offset(0, 1);
        }
        out.push(run);
    }
    out.sort();
    out
}

/// Edges of the grid spanning tree: all vertical edges plus one selected
/// horizontal edge per adjacent portal pair. Pairs are normalized
/// (lexicographically smaller cell first) and sorted.
pub fn tree_edges(active: &BTreeSet<CellCoord>) -> Vec<(CellCoord, CellCoord)> {
    let mut out = Vec::new();
    for &cell in active {
        let north = cell.offset(0, 1);
        if active.contains(&north) {
            out.push((cell, north));
        }
        let west = cell.offset(-1, 0);
        if active.contains(&west) {
            let south = cell.offset(0, -1);
            let south_has_west_edge =
                active.contains(&south) && active.contains(&south.offset(-1, 0));
            if !active.contains(&south) || !south_has_west_edge {
                out.push((west, cell));
            }
        }
    }
    out.sort();
    out
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

/// The Euler tour as a cyclic slot sequence. Slot `(u, j)` is the `j`-th
/// slot of node `u`, whose neighbors are `adj[u]` in ascending id order.
/// The successor of `(u, j)` is `(v, i)` with `v = adj[u][j]` and `i` one
/// position before `u` in `v`'s cyclic neighbor order.
pub(crate) fn euler_ring(adj: &[Vec<usize>], start: (usize, usize)) -> Vec<(usize, usize)> {
    let total: usize = adj.iter().map(|a| a.len()).sum();
    let mut ring = Vec::with_capacity(total);
    let mut cur = start;
    loop {
        ring.push(cur);
        let (u, j) = cur;
        let v = adj[u][j];
        let idx = adj[v].iter().position(|&w| w == u).unwrap();
        let i = (idx + adj[v].len() - 1) % adj[v].len();
        cur = (v, i);
        if cur == start {
            break;
        }
    }
    assert_eq!(ring.len(), total, "tour must cover every slot once");
    ring
}

/// Computes interval labels for a connected, hole-free active cell set.
/// `vid` assigns each cell its virtual id; ids order the tree neighbors and
/// pick the root (minimum id).
pub fn compute_labels(
    active: &BTreeSet<CellCoord>,
    vid: &BTreeMap<CellCoord, u64>,
) -> Result<BTreeMap<CellCoord, NodeLabel>, PortalError> {
    let cells: Vec<CellCoord> = active.iter().cloned().collect();
    let n = cells.len();
    if n == 0 {
        return Ok(BTreeMap::new());
    }
    if n == 1 {
        return Ok(BTreeMap::from([(
            cells[0],
            NodeLabel {
                l: 1,
                r: 1,
                pl: 1,
                pr: 1,
            },
        )]));
    }
    let index: BTreeMap<CellCoord, usize> =
        cells.iter().enumerate().map(|(i, &c)| (c, i)).collect();

    let edges = tree_edges(active);
    let mut sets = DisjointSets::new(n);
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in &edges {
        let (ia, ib) = (index[&a], index[&b]);
        if !sets.union(ia, ib) {
            return Err(PortalError::CycleDetected);
        }
        adj[ia].push(ib);
        adj[ib].push(ia);
    }
    if edges.len() != n - 1 {
        return Err(PortalError::Disconnected);
    }
    for a in adj.iter_mut() {
        a.sort_by_key(|&v| vid[&cells[v]]);
    }

    let root = (0..n).min_by_key(|&u| vid[&cells[u]]).unwrap();
    let ring = euler_ring(&adj, (root, 0));

    // First visits give preorder numbers; the number of first visits up to
    // a node's last slot bounds its subtree.
    let mut l = vec![0u64; n];
    let mut last_pos = vec![0usize; n];
    let mut seen = 0u64;
    let mut first_visit_flags = vec![false; ring.len()];
    for (pos, &(u, _)) in ring.iter().enumerate() {
        if l[u] == 0 {
            seen += 1;
            l[u] = seen;
            first_visit_flags[pos] = true;
        }
        last_pos[u] = pos;
    }
    let mut prefix = vec![0u64; ring.len()];
    let mut acc = 0u64;
    for (pos, &flag) in first_visit_flags.iter().enumerate() {
        acc += flag as u64;
        prefix[pos] = acc;
    }
    let mut r = vec![0u64; n];
    for u in 0..n {
        r[u] = if u == root {
            n as u64
        } else {
            prefix[last_pos[u]]
        };
    }

    let portals = compute_portals(active);
    let mut labels = BTreeMap::new();
    for portal in &portals {
        let leader = portal
            .iter()
            .map(|c| index[c])
            .min_by_key(|&u| l[u])
            .unwrap();
        for c in portal {
            let u = index[c];
            labels.insert(
                *c,
                NodeLabel {
                    l: l[u],
                    r: r[u],
                    pl: l[leader],
                    pr: r[leader],
                },
            );
        }
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cells(list: &[(i64, i64)]) -> BTreeSet<CellCoord> {
        list.iter().map(|&(i, j)| CellCoord::new(i, j)).collect()
    }

    fn seq_vids(active: &BTreeSet<CellCoord>) -> BTreeMap<CellCoord, u64> {
        active
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i as u64))
            .collect()
    }

    #[test]
    fn portals_are_maximal_vertical_runs() {
        let active = cells(&[(0, 0), (0, 1), (0, 3), (1, 0), (1, 1), (1, 2)]);
        let portals = compute_portals(&active);
        assert_eq!(
            portals,
            vec![
                vec![CellCoord::new(0, 0), CellCoord::new(0, 1)],
                vec![CellCoord::new(0, 3)],
                vec![
                    CellCoord::new(1, 0),
                    CellCoord::new(1, 1),
                    CellCoord::new(1, 2)
                ],
            ]
        );
    }

    #[test]
    fn tree_selects_one_horizontal_edge_per_portal_pair() {
        // Two portals side by side: the lowest shared row carries the edge.
        let active = cells(&[(0, 0), (0, 1), (0, 2), (0, 3), (1, 1), (1, 2)]);
        let edges = tree_edges(&active);
        let horiz: Vec<_> = edges.iter().filter(|(a, b)| a.i != b.i).collect();
        assert_eq!(
            horiz,
            vec![&(CellCoord::new(0, 1), CellCoord::new(1, 1))]
        );
        assert_eq!(edges.len(), active.len() - 1);
    }

    #[test]
    fn split_west_column_gets_one_edge_per_pair() {
        // West column has two portals, east column one: each adjacent portal
        // pair gets exactly one horizontal edge.
        let active = cells(&[
            (0, 0),
            (0, 1),
            (0, 3),
            (0, 4),
            (1, 0),
            (1, 1),
            (1, 2),
            (1, 3),
            (1, 4),
        ]);
        let edges = tree_edges(&active);
        let horiz: Vec<_> = edges.iter().filter(|(a, b)| a.i != b.i).cloned().collect();
        assert_eq!(
            horiz,
            vec![
                (CellCoord::new(0, 0), CellCoord::new(1, 0)),
                (CellCoord::new(0, 3), CellCoord::new(1, 3)),
            ]
        );
        assert_eq!(edges.len(), active.len() - 1);
    }

    #[test]
    fn ring_of_cells_is_a_cycle() {
        let active = cells(&[
            (0, 0),
            (0, 1),
            (0, 2),
            (1, 0),
            (1, 2),
            (2, 0),
            (2, 1),
            (2, 2),
        ]);
        let err = compute_labels(&active, &seq_vids(&active)).unwrap_err();
        assert_eq!(err, PortalError::CycleDetected);
    }

    #[test]
    fn euler_order_matches_star_example() {
        // Root with two children a < b: visit order root, a, b.
        let adj = vec![vec![1, 2], vec![0], vec![0]];
        let ring = euler_ring(&adj, (0, 0));
        assert_eq!(ring, vec![(0, 0), (1, 0), (0, 1), (2, 0), (0, 0)][..4]);
    }

    #[test]
    fn euler_order_matches_four_child_example() {
        // Root 0 with children ordered [1, 2, 3, 4]: first visits run
        // 0, 1, 4, 3, 2 (slot 0 first, then descending).
        let adj = vec![vec![1, 2, 3, 4], vec![0], vec![0], vec![0], vec![0]];
        let ring = euler_ring(&adj, (0, 0));
        let mut order = Vec::new();
        for &(u, _) in &ring {
            if !order.contains(&u) {
                order.push(u);
            }
        }
        assert_eq!(order, vec![0, 1, 4, 3, 2]);
    }

    #[test]
    fn path_preorder_is_sequential() {
        // Vertical 3-cell portal with ascending vids: preorder 1, 2, 3.
        let active = cells(&[(0, 0), (0, 1), (0, 2)]);
        let labels = compute_labels(&active, &seq_vids(&active)).unwrap();
        let l0 = labels[&CellCoord::new(0, 0)];
        let l1 = labels[&CellCoord::new(0, 1)];
        let l2 = labels[&CellCoord::new(0, 2)];
        assert_eq!((l0.l, l0.r), (1, 3));
        assert_eq!((l1.l, l1.r), (2, 3));
        assert_eq!((l2.l, l2.r), (3, 3));
        // One portal: everyone carries the leader's interval.
        for lab in [l0, l1, l2] {
            assert_eq!((lab.pl, lab.pr), (1, 3));
        }
    }

    #[test]
    fn plus_shape_labels_pinned() {
        // Plus shape around the center; vids force the root onto the west
        // arm and order the center's children as W(3) < E(5) < N(7) < S(9).
        let active = cells(&[(0, 0), (0, 1), (0, -1), (-1, 0), (1, 0)]);
        let vid: BTreeMap<CellCoord, u64> = BTreeMap::from([
            (CellCoord::new(0, 0), 10),
            (CellCoord::new(-1, 0), 3),
            (CellCoord::new(1, 0), 5),
            (CellCoord::new(0, 1), 7),
            (CellCoord::new(0, -1), 9),
        ]);
        let labels = compute_labels(&active, &vid).unwrap();
        let get = |i, j| labels[&CellCoord::new(i, j)];
        // Hand-derived tour: W0 C(S) S0 C(N) N0 C(E) E0 C(W).
        assert_eq!(get(-1, 0), NodeLabel { l: 1, r: 5, pl: 1, pr: 5 });
        assert_eq!(get(0, 0), NodeLabel { l: 2, r: 5, pl: 2, pr: 5 });
        assert_eq!(get(0, -1), NodeLabel { l: 3, r: 3, pl: 2, pr: 5 });
        assert_eq!(get(0, 1), NodeLabel { l: 4, r: 4, pl: 2, pr: 5 });
        assert_eq!(get(1, 0), NodeLabel { l: 5, r: 5, pl: 5, pr: 5 });
    }

    #[test]
    fn intervals_are_laminar_and_cover_portals() {
        // An irregular hole-free blob; checks structural properties.
        let active = cells(&[
            (0, 0),
            (0, 1),
            (0, 2),
            (1, 2),
            (1, 3),
            (2, 2),
            (2, 1),
            (2, 0),
            (3, 2),
        ]);
        let vid = seq_vids(&active);
        let labels = compute_labels(&active, &vid).unwrap();
        let n = active.len() as u64;
        let mut ls: Vec<u64> = labels.values().map(|lab| lab.l).collect();
        ls.sort_unstable();
        assert_eq!(ls, (1..=n).collect::<Vec<_>>());
        for lab in labels.values() {
            assert!(lab.l <= lab.r && lab.r <= n);
            assert!(lab.pl <= lab.l && lab.r <= lab.pr, "member inside leader");
        }
        for a in labels.values() {
            for b in labels.values() {
                let nested = (a.l <= b.l && b.r <= a.r) || (b.l <= a.l && a.r <= b.r);
                let disjoint = a.r < b.l || b.r < a.l;
                assert!(nested || disjoint, "intervals must be laminar");
            }
        }
        // Leaders are the shallowest portal members.
        let depths = {
            let edges = tree_edges(&active);
            let mut adj: BTreeMap<CellCoord, Vec<CellCoord>> = BTreeMap::new();
            for &(a, b) in &edges {
                adj.entry(a).or_default().push(b);
                adj.entry(b).or_default().push(a);
            }
            let root = *vid.iter().min_by_key(|&(_, &v)| v).unwrap().0;
            let mut depth: BTreeMap<CellCoord, u64> = BTreeMap::from([(root, 0)]);
            let mut queue = std::collections::VecDeque::from([root]);
            while let Some(c) = queue.pop_front() {
                for &nb in adj.get(&c).into_iter().flatten() {
                    if !depth.contains_key(&nb) {
                        depth.insert(nb, depth[&c] + 1);
                        queue.push_back(nb);
                    }
                }
            }
            depth
        };
        for portal in compute_portals(&active) {
            let leader_l = portal.iter().map(|c| labels[c].l).min().unwrap();
            let leader = portal.iter().find(|c| labels[c].l == leader_l).unwrap();
            let min_depth = portal.iter().map(|c| depths[c]).min().unwrap();
            assert_eq!(depths[leader], min_depth);
            for c in &portal {
                assert_eq!((labels[c].pl, labels[c].pr), (labels[leader].own()));
            }
        }
    }

    #[test]
    fn single_cell_label() {
        let active = cells(&[(4, -2)]);
        let labels = compute_labels(&active, &seq_vids(&active)).unwrap();
        assert_eq!(
            labels[&CellCoord::new(4, -2)],
            NodeLabel { l: 1, r: 1, pl: 1, pr: 1 }
        );
    }
}
