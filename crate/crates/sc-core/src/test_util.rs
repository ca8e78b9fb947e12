//! Shared fixtures for unit tests.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::graph::{DepGraph, FlagSet, NodeMeta};

pub const GB: u64 = 1_000_000_000;

/// Six-node toy workload: two large intermediates (v1, v3) that can only
/// be co-flagged under a 100 GB budget when v4 runs before v3.
///
/// Nodes (size GB, score): v1(100,100) v2(40,0) v3(100,100) v4(20,0)
/// v5(10,10) v6(10,10); edges v1->v2, v1->v4, v2->v3, v3->v5, v4->v5,
/// v5->v6.
pub fn replica_toy() -> DepGraph {
    let spec: &[(&str, u64, f64)] = &[
        ("v1", 100, 100.0),
        ("v2", 40, 0.0),
        ("v3", 100, 100.0),
        ("v4", 20, 0.0),
        ("v5", 10, 10.0),
        ("v6", 10, 10.0),
    ];
    let nodes = spec
        .iter()
        .map(|&(label, size, score)| NodeMeta::new(label, size * GB).with_score(score))
        .collect();
    let edges = [
        ("v1", "v2"),
        ("v1", "v4"),
        ("v2", "v3"),
        ("v3", "v5"),
        ("v4", "v5"),
        ("v5", "v6"),
    ]
    .iter()
    .map(|&(a, b)| (a.to_string(), b.to_string()))
    .collect();
    DepGraph::new(nodes, edges).unwrap()
}

pub fn toy_scores(g: &DepGraph) -> Vec<f64> {
    g.node_ids().map(|v| g.meta(v).speedup_score.unwrap()).collect()
}

pub fn flags(g: &DepGraph, labels: &[&str]) -> FlagSet {
    labels.iter().map(|l| g.node_id(l).unwrap()).collect()
}

/// Random DAG over `n` nodes with forward edges drawn at `density`, sizes
/// in `1..=max_size`, integral millisecond scores in `0..=max_score_ms`.
pub fn random_dag(rng: &mut ChaCha8Rng, n: usize, density: f64, max_size: u64, max_score_ms: u64) -> DepGraph {
    let nodes = (0..n)
        .map(|i| {
            NodeMeta::new(format!("n{i:03}"), rng.gen_range(1..=max_size))
                .with_score(rng.gen_range(0..=max_score_ms) as f64 / 1000.0)
                .with_compute(rng.gen_range(0.05..5.0))
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen_bool(density) {
                edges.push((format!("n{i:03}"), format!("n{j:03}")));
            }
        }
    }
    DepGraph::new(nodes, edges).unwrap()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
