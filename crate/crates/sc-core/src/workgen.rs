//! Synthetic refresh-workload generator: a layered DAG whose shape is
//! controlled by a height/width ratio, per-stage node-count variance, and
//! a per-node outdegree cap, with operator kinds assigned by a fixed
//! Markov chain and sizes derived from parents through per-kind
//! multipliers. Fully deterministic per seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{DepGraph, NodeMeta};
use crate::scoring::{compute_speedup_scores, CostModel};

/// Geometric ladder of 24 base-table sizes from 1 MB to 10 GB used for
/// source nodes when no pool is supplied.
pub const DEFAULT_SOURCE_SIZES: [u64; 24] = [
    1_000_000,
    1_492_496,
    2_227_543,
    3_324_598,
    4_961_948,
    7_405_685,
    11_052_951,
    16_496_481,
    24_620_924,
    36_746_619,
    54_844_166,
    81_854_673,
    122_167_735,
    182_334_800,
    272_133_877,
    406_158_599,
    606_189_899,
    904_735_724,
    1_350_314_038,
    2_015_337_686,
    3_007_882_518,
    4_489_251_258,
    6_700_187_504,
    10_000_000_000,
];

/// Generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenParams {
    pub node_count: usize,
    /// Stage count grows with the square root of `ratio * node_count`.
    pub height_width_ratio: f64,
    /// Outgoing-edge budget per node, sampled uniformly from `0..=max`.
    pub max_outdegree: u32,
    /// Standard deviation of per-stage node counts.
    pub stage_stdev: f64,
    #[serde(default = "default_pool")]
    pub source_size_pool: Vec<u64>,
    pub seed: u64,
}

fn default_pool() -> Vec<u64> {
    DEFAULT_SOURCE_SIZES.to_vec()
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            node_count: 50,
            height_width_ratio: 2.0,
            max_outdegree: 3,
            stage_stdev: 1.0,
            source_size_pool: default_pool(),
            seed: 42,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error("infeasible parameters: {0}")]
    InfeasibleParams(String),
}

/// Relational operator kind of a non-source node; drives output size.
///
/// A node with two or more parents is a join; single-parent nodes draw a
/// unary kind from the Markov chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    /// Output may exceed its inputs: 1.2x the largest parent.
    Join,
    /// 0.1x the parent size.
    Agg,
    /// 0.3x the parent size.
    Filter,
    /// 0.6x the parent size.
    Project,
}

impl OpKind {
    pub fn output_size(self, parent_sizes: &[u64]) -> u64 {
        let out = match self {
            OpKind::Join => 1.2 * parent_sizes.iter().copied().max().unwrap_or(0) as f64,
            OpKind::Agg => 0.1 * parent_sizes.iter().sum::<u64>() as f64,
            OpKind::Filter => 0.3 * parent_sizes.iter().sum::<u64>() as f64,
            OpKind::Project => 0.6 * parent_sizes.iter().sum::<u64>() as f64,
        };
        (out.round() as u64).max(1)
    }
}

/// Markov state of the node a unary operator consumes.
#[derive(Clone, Copy)]
enum ChainState {
    Source,
    Op(OpKind),
}

/// Transition rows over [Agg, Filter, Project]; scans and joins feed
/// filter-heavy and aggregation-heavy successors respectively.
fn unary_distribution(state: ChainState) -> [f64; 3] {
    match state {
        ChainState::Source => [0.20, 0.50, 0.30],
        ChainState::Op(OpKind::Join) => [0.50, 0.25, 0.25],
        ChainState::Op(OpKind::Filter) => [0.35, 0.25, 0.40],
        ChainState::Op(OpKind::Project) => [0.50, 0.30, 0.20],
        ChainState::Op(OpKind::Agg) => [0.40, 0.25, 0.35],
    }
}

fn sample_unary(rng: &mut ChaCha8Rng, state: ChainState) -> OpKind {
    let dist = unary_distribution(state);
    let r: f64 = rng.gen();
    if r < dist[0] {
        OpKind::Agg
    } else if r < dist[0] + dist[1] {
        OpKind::Filter
    } else {
        OpKind::Project
    }
}

/// Standard normal via Box-Muller; two uniforms per sample keeps the
/// stream layout stable.
fn normal(rng: &mut ChaCha8Rng, mean: f64, stdev: f64) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    mean + stdev * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Generates a workload. Node labels are `n000`, `n001`, ... in stage
/// order, so label order is topological. Speedup scores and compute times
/// are filled in from the default cost model.
pub fn generate(params: &GenParams) -> Result<DepGraph, GenError> {
    if params.node_count == 0 {
        return Err(GenError::InfeasibleParams("node_count must be at least 1".into()));
    }
    if params.source_size_pool.is_empty() {
        return Err(GenError::InfeasibleParams("source_size_pool is empty".into()));
    }
    if !(params.height_width_ratio > 0.0) {
        return Err(GenError::InfeasibleParams("height_width_ratio must be positive".into()));
    }
    if params.stage_stdev < 0.0 {
        return Err(GenError::InfeasibleParams("stage_stdev must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n_target = params.node_count;

    let stages = ((params.height_width_ratio * n_target as f64).sqrt().round() as usize)
        .clamp(1, n_target);
    let mean_width = n_target as f64 / stages as f64;
    let widths: Vec<usize> = (0..stages)
        .map(|_| {
            let w = if params.stage_stdev == 0.0 {
                mean_width
            } else {
                normal(&mut rng, mean_width, params.stage_stdev)
            };
            (w.round() as i64).max(1) as usize
        })
        .collect();

    // Stage-major node indexing.
    let mut stage_of: Vec<usize> = Vec::new();
    let mut stage_members: Vec<Vec<usize>> = Vec::with_capacity(stages);
    for (s, &w) in widths.iter().enumerate() {
        let from = stage_of.len();
        stage_of.extend(std::iter::repeat(s).take(w));
        stage_members.push((from..from + w).collect());
    }
    let n = stage_of.len();

    let capacity: Vec<u32> = (0..n).map(|_| rng.gen_range(0..=params.max_outdegree)).collect();
    let mut outdeg = vec![0u32; n];
    let mut child_sets: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut parent_sets: Vec<Vec<usize>> = vec![Vec::new(); n];

    for s in 0..stages.saturating_sub(1) {
        for &v in &stage_members[s] {
            for _ in 0..capacity[v] {
                let target_stage = if s + 2 >= stages || rng.gen_bool(0.75) {
                    s + 1
                } else {
                    rng.gen_range(s + 1..stages)
                };
                let members = &stage_members[target_stage];
                let w = members[rng.gen_range(0..members.len())];
                if child_sets[v].contains(&w) {
                    continue;
                }
                child_sets[v].push(w);
                parent_sets[w].push(v);
                outdeg[v] += 1;
            }
        }
    }

    // Every non-source node needs a parent; adopt from the previous stage
    // when the edge pass left it orphaned, falling back to any earlier
    // node with spare outdegree.
    for s in 1..stages {
        for &v in &stage_members[s] {
            if !parent_sets[v].is_empty() {
                continue;
            }
            let candidate = stage_members[s - 1]
                .iter()
                .chain((0..s - 1).rev().flat_map(|e| stage_members[e].iter()))
                .filter(|&&p| outdeg[p] < params.max_outdegree)
                .min_by_key(|&&p| (outdeg[p], p))
                .copied();
            let Some(p) = candidate else {
                return Err(GenError::InfeasibleParams(format!(
                    "no node with spare outdegree (cap {}) can feed stage {s}",
                    params.max_outdegree
                )));
            };
            child_sets[p].push(v);
            parent_sets[v].push(p);
            outdeg[p] += 1;
        }
    }

    // Operator kinds, then sizes, in stage order so parents are sized
    // before children.
    let mut kinds: Vec<Option<OpKind>> = vec![None; n];
    let mut sizes = vec![0u64; n];
    for v in 0..n {
        if parent_sets[v].is_empty() {
            sizes[v] =
                params.source_size_pool[rng.gen_range(0..params.source_size_pool.len())];
            continue;
        }
        parent_sets[v].sort_unstable();
        let kind = if parent_sets[v].len() >= 2 {
            OpKind::Join
        } else {
            let primary = parent_sets[v][0];
            let state = match kinds[primary] {
                Some(k) => ChainState::Op(k),
                None => ChainState::Source,
            };
            sample_unary(&mut rng, state)
        };
        kinds[v] = Some(kind);
        let parent_sizes: Vec<u64> = parent_sets[v].iter().map(|&p| sizes[p]).collect();
        sizes[v] = kind.output_size(&parent_sizes);
    }

    let width = (n.max(2) as f64).log10().floor() as usize + 1;
    let mut nodes: Vec<NodeMeta> = (0..n)
        .map(|v| {
            let input: u64 = parent_sets[v].iter().map(|&p| sizes[p]).sum();
            // Nominal 2 GB/s of processed bytes.
            let compute = (input + sizes[v]) as f64 / 2e9;
            NodeMeta::new(format!("n{:0width$}", v), sizes[v]).with_compute(compute)
        })
        .collect();
    let mut edges = Vec::new();
    for v in 0..n {
        let mut children = child_sets[v].clone();
        children.sort_unstable();
        for w in children {
            edges.push((nodes[v].label.clone(), nodes[w].label.clone()));
        }
    }

    let graph = DepGraph::new(nodes.clone(), edges.clone())
        .expect("generated graph violates its own invariants");
    let scores = compute_speedup_scores(&graph, &CostModel::default());
    for (node, score) in nodes.iter_mut().zip(&scores) {
        node.speedup_score = Some(*score);
    }
    Ok(DepGraph::new(nodes, edges).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeId;

    #[test]
    fn same_seed_same_graph() {
        let params = GenParams { node_count: 40, seed: 7, ..GenParams::default() };
        let a = generate(&params).unwrap();
        let b = generate(&params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_node_is_one_source() {
        let g = generate(&GenParams { node_count: 1, stage_stdev: 0.0, ..GenParams::default() })
            .unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.edge_count(), 0);
        assert!(DEFAULT_SOURCE_SIZES.contains(&g.size(NodeId::new(0))));
    }

    #[test]
    fn zero_outdegree_with_stages_is_infeasible() {
        let err = generate(&GenParams {
            node_count: 30,
            max_outdegree: 0,
            ..GenParams::default()
        })
        .unwrap_err();
        assert!(matches!(err, GenError::InfeasibleParams(_)));
    }

    #[test]
    fn structural_statistics_over_many_seeds() {
        let mut total_nodes = 0usize;
        let seeds = 400u64;
        for seed in 0..seeds {
            let params = GenParams {
                node_count: 100,
                height_width_ratio: 2.0,
                max_outdegree: 3,
                stage_stdev: 1.0,
                seed,
                ..GenParams::default()
            };
            let g = generate(&params).unwrap();
            total_nodes += g.len();
            let max_out = g.node_ids().map(|v| g.children(v).len()).max().unwrap();
            assert!(max_out <= 3, "seed {seed} exceeded outdegree cap");
            // Construction through DepGraph::new already proves acyclicity.
        }
        let mean = total_nodes as f64 / seeds as f64;
        assert!((mean - 100.0).abs() < 10.0, "mean node count {mean}");
    }

    #[test]
    fn sizes_follow_operator_rules() {
        assert_eq!(OpKind::Join.output_size(&[100, 50]), 120);
        assert_eq!(OpKind::Agg.output_size(&[1000]), 100);
        assert_eq!(OpKind::Filter.output_size(&[1000]), 300);
        assert_eq!(OpKind::Project.output_size(&[1000]), 600);
        // Join is parent-monotone, unary kinds contract.
        assert!(OpKind::Join.output_size(&[100, 80]) >= 100);
        assert!(OpKind::Filter.output_size(&[100]) <= 100);
        assert!(OpKind::Project.output_size(&[100]) <= 100);
    }

    #[test]
    fn generated_scores_are_present_and_nonnegative() {
        let g = generate(&GenParams { node_count: 60, seed: 3, ..GenParams::default() })
            .unwrap();
        for v in g.node_ids() {
            let meta = g.meta(v);
            assert!(meta.speedup_score.is_some());
            assert!(meta.speedup_score.unwrap() >= 0.0);
            assert!(meta.compute_seconds.unwrap() > 0.0);
        }
    }

    #[test]
    fn edges_point_to_later_stages_only() {
        let g = generate(&GenParams { node_count: 80, seed: 11, ..GenParams::default() })
            .unwrap();
        // Stage-major labels make label order topological.
        for (u, v) in g.edges() {
            assert!(g.label(u) < g.label(v));
        }
    }
}
