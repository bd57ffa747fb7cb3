//! Shared helpers for unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{build_udg, NodeId, Point, UdgInstance};

/// Deterministic connected instance: uniform points in a disk sized for a
/// density of roughly four nodes per unit square, resampled until the
/// unit-disk graph is connected.
pub fn random_connected_instance(seed: u64, n: usize) -> UdgInstance {
    for attempt in 0..64u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ attempt.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let r = (n as f64 * 0.08).sqrt().max(0.9);
        let mut pts: Vec<Point> = Vec::new();
        let mut tries = 0usize;
        while pts.len() < n && tries < 200_000 {
            tries += 1;
            let x = rng.gen_range(-r..r);
            let y = rng.gen_range(-r..r);
            if x * x + y * y > r * r {
                continue;
            }
            let p = Point::new(x, y);
            if pts.iter().any(|q| q.dist(&p) < 2e-3) {
                continue;
            }
            pts.push(p);
        }
        if pts.len() < n {
            continue;
        }
        let nodes: Vec<(NodeId, Point)> = pts
            .into_iter()
            .enumerate()
            .map(|(i, p)| (i as NodeId, p))
            .collect();
        let udg = build_udg(&nodes).unwrap();
        if udg.is_connected() {
            return udg;
        }
    }
    panic!("no connected instance for seed {seed}, n {n}");
}
