//! Stretch measurement: routed hop counts against exact baselines,
//! with per-stage round counts.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::geometry::{CellCoord, NodeId, UdgInstance, EPS};
use crate::grid::GridBuild;
use crate::label::Labelling;
use crate::portal::NodeLabel;
use crate::routing::Router;

use super::oracle::{udg_euclidean, udg_hops};
use super::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub s: NodeId,
    pub t: NodeId,
    /// Euclidean shortest-path distance in the graph.
    pub dist_g: f64,
    /// Hop distance in the graph.
    pub hop_g: u32,
    pub routed_hops: u64,
    /// routed_hops / hop_g.
    pub stretch: f64,
    pub adjacent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub max: f64,
    pub mean: f64,
    pub p99: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRounds {
    pub election: u64,
    pub paths: u64,
    pub labelling: Vec<(String, u64)>,
    pub labelling_total: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StretchReport {
    pub seed: u64,
    pub pairs: Vec<PairRecord>,
    pub aggregates: Aggregates,
    pub rounds: StageRounds,
}

impl StretchReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(s).map_err(|e| HarnessError::BadInstance(e.to_string()))
    }
}

pub fn stage_rounds(build: &GridBuild, labelling: &Labelling) -> StageRounds {
    let stages: Vec<(String, u64)> = labelling
        .stage_rounds
        .iter()
        .map(|&(name, r)| (name.to_string(), r))
        .collect();
    let total = stages.iter().map(|&(_, r)| r).sum();
    StageRounds {
        election: build.election_comm_rounds,
        paths: build.path_comm_rounds,
        labelling: stages,
        labelling_total: total,
    }
}

/// Routes the given pairs and measures stretch against the hop oracle.
pub fn stretch_over(
    udg: &UdgInstance,
    build: &GridBuild,
    labels: &BTreeMap<CellCoord, NodeLabel>,
    labelling: &Labelling,
    seed: u64,
    pairs: &[(NodeId, NodeId)],
) -> Result<StretchReport, HarnessError> {
    let router = Router::new(udg, build, labels);
    let mut hop_cache: BTreeMap<usize, Vec<Option<u32>>> = BTreeMap::new();
    let mut dist_cache: BTreeMap<usize, Vec<Option<f64>>> = BTreeMap::new();
    let mut records = Vec::with_capacity(pairs.len());
    for &(s, t) in pairs {
        if s == t {
            continue;
        }
        let si = udg
            .idx_of(s)
            .ok_or_else(|| HarnessError::BadInstance(format!("unknown node id {s}")))?;
        let ti = udg
            .idx_of(t)
            .ok_or_else(|| HarnessError::BadInstance(format!("unknown node id {t}")))?;
        let routed_hops = (router.route(s, t)?.path.len() - 1) as u64;
        let hops = hop_cache.entry(si).or_insert_with(|| udg_hops(udg, si));
        let hop_g = hops[ti].expect("connected instance");
        let dists = dist_cache
            .entry(si)
            .or_insert_with(|| udg_euclidean(udg, si));
        let dist_g = dists[ti].expect("connected instance");
        records.push(PairRecord {
            s,
            t,
            dist_g,
            hop_g,
            routed_hops,
            stretch: routed_hops as f64 / hop_g as f64,
            adjacent: udg.pt(si).dist(&udg.pt(ti)) <= 1.0 + EPS,
        });
    }
    let mut stretches: Vec<f64> = records.iter().map(|r| r.stretch).collect();
    stretches.sort_by(f64::total_cmp);
    let aggregates = if stretches.is_empty() {
        Aggregates { max: 0.0, mean: 0.0, p99: 0.0 }
    } else {
        let max = *stretches.last().unwrap();
        let mean = stretches.iter().sum::<f64>() / stretches.len() as f64;
        let p99_idx = ((0.99 * stretches.len() as f64).ceil() as usize)
            .clamp(1, stretches.len())
            - 1;
        Aggregates { max, mean, p99: stretches[p99_idx] }
    };
    Ok(StretchReport {
        seed,
        pairs: records,
        aggregates,
        rounds: stage_rounds(build, labelling),
    })
}

/// Samples `k` node pairs from the seed. Sources are drawn from a small
/// pool so the distance baselines amortize over targets.
pub fn sample_pairs(udg: &UdgInstance, k: usize, seed: u64) -> Vec<(NodeId, NodeId)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = udg.n();
    if n < 2 {
        return Vec::new();
    }
    let pool: Vec<usize> = (0..(k / 25 + 1).min(n))
        .map(|_| rng.gen_range(0..n))
        .collect();
    let mut pairs = Vec::with_capacity(k);
    while pairs.len() < k {
        let s = pool[rng.gen_range(0..pool.len())];
        let t = rng.gen_range(0..n);
        if s != t {
            pairs.push((udg.id(s), udg.id(t)));
        }
    }
    pairs
}

/// Routes `k` seeded random pairs and reports stretch and round counts.
pub fn stretch_report(
    udg: &UdgInstance,
    build: &GridBuild,
    labels: &BTreeMap<CellCoord, NodeLabel>,
    labelling: &Labelling,
    k: usize,
    seed: u64,
) -> Result<StretchReport, HarnessError> {
    let pairs = sample_pairs(udg, k, seed);
    stretch_over(udg, build, labels, labelling, seed, &pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::compute_active_cells;
    use crate::grid::{build_grid, BuildOptions};
    use crate::harness::gen::generate_instance;
    use crate::label::{run_labelling, LabelOptions};

    fn built(seed: u64, n: usize) -> (UdgInstance, GridBuild, Labelling) {
        let f = generate_instance(seed, n, &Default::default()).unwrap();
        let udg = f.to_udg().unwrap();
        let map = compute_active_cells(&udg);
        let build = build_grid(&udg, &map, &BuildOptions::default()).unwrap();
        let labelling = run_labelling(&build.vid_of_cell, &LabelOptions::default()).unwrap();
        (udg, build, labelling)
    }

    #[test]
    fn adjacent_pairs_have_stretch_one() {
        let (udg, build, labelling) = built(2, 40);
        let pairs: Vec<(NodeId, NodeId)> = udg
            .edges()
            .iter()
            .take(30)
            .map(|&(u, v)| (udg.id(u), udg.id(v)))
            .collect();
        let rep = stretch_over(&udg, &build, &labelling.labels, &labelling, 0, &pairs).unwrap();
        assert!(!rep.pairs.is_empty());
        for p in &rep.pairs {
            assert!(p.adjacent);
            assert_eq!(p.routed_hops, 1);
            assert_eq!(p.stretch, 1.0);
        }
        assert_eq!(rep.aggregates.max, 1.0);
    }

    #[test]
    fn stretch_is_at_least_one_and_bounded() {
        let (udg, build, labelling) = built(4, 60);
        let rep = stretch_report(&udg, &build, &labelling.labels, &labelling, 120, 9).unwrap();
        for p in &rep.pairs {
            assert!(p.stretch >= 1.0);
            if !p.adjacent {
                assert!((p.routed_hops as f64) <= 36.0 * p.dist_g);
                assert!((p.routed_hops as f64) <= 22.0 * p.dist_g + 14.0);
            }
        }
    }

    #[test]
    fn same_seed_reports_are_identical_and_round_trip() {
        let (udg, build, labelling) = built(5, 50);
        let a = stretch_report(&udg, &build, &labelling.labels, &labelling, 80, 3).unwrap();
        let b = stretch_report(&udg, &build, &labelling.labels, &labelling, 80, 3).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let back = StretchReport::from_json(&a.to_json()).unwrap();
        assert_eq!(a, back);
    }
}
