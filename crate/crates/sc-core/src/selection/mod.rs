//! Node selection for a fixed execution order: which outputs to keep in
//! the memory catalog.
//!
//! The exact path derives per-position coexistence constraint sets,
//! prunes the redundant ones, and hands the rest to an in-house 0-1
//! multidimensional-knapsack branch-and-bound ([`mkp`]). Greedy, random,
//! and ratio baselines share the same feasibility rule (adding a node
//! must keep peak memory within budget).

mod mkp;

pub use mkp::{solve_mkp, MkpInstance, MkpSolution};

use crate::graph::{DepGraph, ExecOrder, FlagSet, NodeId};

/// Default branch-and-bound node-expansion cap.
pub const DEFAULT_NODE_CAP: u64 = 10_000_000;

/// Scores enter the knapsack objective as integral milliseconds.
pub fn profit_ms(score: f64) -> u64 {
    (score * 1000.0).round() as u64
}

/// A node is worth considering iff it fits the budget by itself and its
/// quantized score is positive.
fn is_eligible(size: u64, score: f64, budget: u64) -> bool {
    size <= budget && profit_ms(score) > 0
}

/// One coexistence constraint: the flag-eligible nodes simultaneously
/// resident at `position`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintSet {
    pub position: usize,
    /// Ascending by node index.
    pub members: Vec<NodeId>,
}

impl ConstraintSet {
    fn is_subset_of(&self, other: &ConstraintSet) -> bool {
        let mut it = other.members.iter();
        self.members.iter().all(|m| it.any(|o| o == m))
    }

    fn total_size(&self, g: &DepGraph) -> u64 {
        self.members.iter().map(|&v| g.size(v)).sum()
    }
}

/// The per-position coexistence sets feeding the knapsack, plus the nodes
/// excluded up front (oversized or zero-score).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintFamily {
    pub sets: Vec<ConstraintSet>,
    /// Ascending by node index.
    pub excluded: Vec<NodeId>,
}

impl ConstraintFamily {
    /// All nonempty per-position sets, without maximality or triviality
    /// pruning. Exists so the pruned path can be checked against it.
    pub fn raw(g: &DepGraph, scores: &[f64], order: &ExecOrder, budget: u64) -> Self {
        Self::build(g, scores, order, budget, false)
    }

    /// The pruned family: only maximal, non-trivial sets survive.
    pub fn derive(g: &DepGraph, scores: &[f64], order: &ExecOrder, budget: u64) -> Self {
        Self::build(g, scores, order, budget, true)
    }

    fn build(g: &DepGraph, scores: &[f64], order: &ExecOrder, budget: u64, prune: bool) -> Self {
        let n = g.len();
        let mut excluded = Vec::new();
        let mut eligible = vec![false; n];
        for v in g.node_ids() {
            if is_eligible(g.size(v), scores[v.index()], budget) {
                eligible[v.index()] = true;
            } else {
                excluded.push(v);
            }
        }

        // One forward sweep over positions. The alive set gains at most
        // the node executed at each position and loses the nodes whose
        // last child sits there, so a set can only be maximal right
        // before a departure (or at the final position).
        let mut ends_at: Vec<Vec<NodeId>> = vec![Vec::new(); n + 1];
        for v in g.node_ids() {
            if eligible[v.index()] {
                let (_, end) = g.span_unchecked(order, v);
                ends_at[end].push(v);
            }
        }
        let mut alive: Vec<NodeId> = Vec::new();
        let mut kept: Vec<ConstraintSet> = Vec::new();
        for p in 1..=n {
            let v = order.node_at(p);
            if eligible[v.index()] {
                alive.push(v);
            }
            if alive.is_empty() {
                continue;
            }
            let departing = !ends_at[p].is_empty();
            if !prune || departing || p == n {
                let mut members = alive.clone();
                members.sort_unstable();
                kept.push(ConstraintSet { position: p, members });
            }
            if departing {
                alive.retain(|m| !ends_at[p].contains(m));
            }
        }

        let sets = if prune {
            // Departure-boundary sets can still be subsets of earlier
            // kept sets; the final filters match the pairwise-subset and
            // triviality definitions exactly.
            let mut pruned: Vec<ConstraintSet> = Vec::new();
            for set in kept {
                if set.total_size(g) <= budget {
                    continue;
                }
                if pruned.iter().any(|earlier| set.is_subset_of(earlier)) {
                    continue;
                }
                pruned.push(set);
            }
            pruned
        } else {
            kept
        };

        ConstraintFamily { sets, excluded }
    }

    /// Nodes appearing in at least one retained set, ascending.
    pub fn variables(&self) -> Vec<NodeId> {
        let mut vars: Vec<NodeId> = self.sets.iter().flat_map(|s| s.members.iter().copied()).collect();
        vars.sort_unstable();
        vars.dedup();
        vars
    }
}

/// Result of the exact selector. `exact` is false when the solver hit its
/// node-expansion cap and fell back to the best incumbent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub flagged: FlagSet,
    pub exact: bool,
}

/// Exact selection: prune constraints, solve the knapsack, then add every
/// eligible node that appears in no retained constraint (flagging those
/// can never exceed the budget).
pub fn select_nodes_mkp(
    g: &DepGraph,
    scores: &[f64],
    order: &ExecOrder,
    budget: u64,
    node_cap: u64,
) -> Selection {
    let family = ConstraintFamily::derive(g, scores, order, budget);
    select_with_family(g, scores, budget, &family, node_cap)
}

/// Same as [`select_nodes_mkp`] but against a caller-supplied family
/// (pruned or raw).
pub fn select_with_family(
    g: &DepGraph,
    scores: &[f64],
    budget: u64,
    family: &ConstraintFamily,
    node_cap: u64,
) -> Selection {
    let instance = MkpInstance::from_family(g, scores, family, budget);
    let solution = solve_mkp(&instance, node_cap);
    let mut flagged: FlagSet = instance
        .vars
        .iter()
        .zip(&solution.take)
        .filter(|&(_, &take)| take)
        .map(|(&v, _)| v)
        .collect();

    let in_constraint: Vec<NodeId> = instance.vars.clone();
    let mut excluded_iter = family.excluded.iter().peekable();
    for v in g.node_ids() {
        if excluded_iter.next_if(|&&e| e == v).is_some() {
            continue;
        }
        if in_constraint.binary_search(&v).is_err() {
            flagged.insert(v);
        }
    }
    Selection { flagged, exact: solution.exact }
}

/// Visit nodes in execution order, flagging whenever the budget still
/// holds with the node added.
pub fn select_nodes_greedy(
    g: &DepGraph,
    scores: &[f64],
    order: &ExecOrder,
    budget: u64,
) -> FlagSet {
    admit_in_sequence(g, order, budget, order.sequence().iter().copied(), scores)
}

/// Same admission rule as greedy over a seed-shuffled visitation order.
pub fn select_nodes_random(
    g: &DepGraph,
    scores: &[f64],
    order: &ExecOrder,
    budget: u64,
    seed: u64,
) -> FlagSet {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut visit: Vec<NodeId> = g.node_ids().collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    visit.shuffle(&mut rng);
    admit_in_sequence(g, order, budget, visit.into_iter(), scores)
}

/// Visit nodes by descending score/size ratio (zero-size nodes first),
/// ties by label.
pub fn select_nodes_ratio(
    g: &DepGraph,
    scores: &[f64],
    order: &ExecOrder,
    budget: u64,
) -> FlagSet {
    // Fixed per-node keys keep the comparison a total order; zero-size
    // nodes rank as infinite.
    let mut visit: Vec<(f64, u32, NodeId)> = g
        .node_ids()
        .map(|v| {
            let size = g.size(v);
            let ratio = if size == 0 {
                f64::INFINITY
            } else {
                scores[v.index()] / size as f64
            };
            (ratio, g.label_rank(v), v)
        })
        .collect();
    visit.sort_unstable_by(|a, b| {
        b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1))
    });
    admit_in_sequence(g, order, budget, visit.into_iter().map(|(_, _, v)| v), scores)
}

fn admit_in_sequence(
    g: &DepGraph,
    order: &ExecOrder,
    budget: u64,
    visit: impl Iterator<Item = NodeId>,
    scores: &[f64],
) -> FlagSet {
    let mut flagged = FlagSet::new();
    for v in visit {
        if !is_eligible(g.size(v), scores[v.index()], budget) {
            continue;
        }
        flagged.insert(v);
        if g.peak_memory(order, &flagged) > budget {
            flagged.remove(v);
        }
    }
    flagged
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{NodeMeta, TopoStrategy};
    use crate::test_util::{random_dag, replica_toy, seeded, toy_scores, GB};
    use rand::Rng;

    fn chain3() -> (DepGraph, Vec<f64>) {
        let g = DepGraph::new(
            vec![
                NodeMeta::new("v1", 60),
                NodeMeta::new("v2", 60),
                NodeMeta::new("v3", 60),
            ],
            vec![("v1".into(), "v2".into()), ("v2".into(), "v3".into())],
        )
        .unwrap();
        (g, vec![5.0, 7.0, 9.0])
    }

    fn labels(g: &DepGraph, set: &FlagSet) -> Vec<String> {
        set.iter().map(|v| g.label(v).to_string()).collect()
    }

    #[test]
    fn replica_toy_tau2_family() {
        let g = replica_toy();
        let scores = toy_scores(&g);
        let tau2 = g.topo_order(TopoStrategy::BfsLayered);
        let family = ConstraintFamily::derive(&g, &scores, &tau2, 100 * GB);
        let excl: Vec<&str> = family.excluded.iter().map(|&v| g.label(v)).collect();
        assert_eq!(excl, ["v2", "v4"]);
        assert_eq!(family.sets.len(), 1);
        assert_eq!(family.sets[0].position, 5);
        let members: Vec<&str> = family.sets[0].members.iter().map(|&v| g.label(v)).collect();
        assert_eq!(members, ["v3", "v5"]);
    }

    #[test]
    fn all_zero_scores_excludes_everything() {
        let g = replica_toy();
        let scores = vec![0.0; g.len()];
        let order = g.topo_order(TopoStrategy::BfsLayered);
        let family = ConstraintFamily::derive(&g, &scores, &order, 100 * GB);
        assert_eq!(family.excluded.len(), g.len());
        assert!(family.sets.is_empty());
    }

    #[test]
    fn chain_family_keeps_both_overlaps() {
        let (g, scores) = chain3();
        let order = g.topo_order(TopoStrategy::BfsLayered);
        let family = ConstraintFamily::derive(&g, &scores, &order, 100);
        assert!(family.excluded.is_empty());
        let shape: Vec<(usize, Vec<&str>)> = family
            .sets
            .iter()
            .map(|s| (s.position, s.members.iter().map(|&v| g.label(v)).collect()))
            .collect();
        assert_eq!(shape, vec![(2, vec!["v1", "v2"]), (3, vec!["v2", "v3"])]);
    }

    #[test]
    fn chain_mkp_flags_endpoints() {
        let (g, scores) = chain3();
        let order = g.topo_order(TopoStrategy::BfsLayered);
        let sel = select_nodes_mkp(&g, &scores, &order, 100, DEFAULT_NODE_CAP);
        assert!(sel.exact);
        assert_eq!(labels(&g, &sel.flagged), ["v1", "v3"]);
        assert_eq!(sel.flagged.total_score(&scores), 14.0);
    }

    #[test]
    fn replica_toy_mkp_under_both_orders() {
        let g = replica_toy();
        let scores = toy_scores(&g);

        let tau2 = g.topo_order(TopoStrategy::BfsLayered);
        let sel = select_nodes_mkp(&g, &scores, &tau2, 100 * GB, DEFAULT_NODE_CAP);
        assert_eq!(labels(&g, &sel.flagged), ["v1", "v3", "v6"]);
        assert_eq!(sel.flagged.total_score(&scores), 210.0);

        let tau1 = g.topo_order(TopoStrategy::Arbitrary);
        let sel = select_nodes_mkp(&g, &scores, &tau1, 100 * GB, DEFAULT_NODE_CAP);
        assert_eq!(labels(&g, &sel.flagged), ["v1", "v5", "v6"]);
        assert_eq!(sel.flagged.total_score(&scores), 120.0);
    }

    #[test]
    fn empty_graph_selects_nothing() {
        let g = DepGraph::new(vec![], vec![]).unwrap();
        let order = g.topo_order(TopoStrategy::BfsLayered);
        let sel = select_nodes_mkp(&g, &[], &order, 100, DEFAULT_NODE_CAP);
        assert!(sel.flagged.is_empty());
    }

    #[test]
    fn greedy_on_replica_toy_tau1() {
        let g = replica_toy();
        let scores = toy_scores(&g);
        let tau1 = g.topo_order(TopoStrategy::Arbitrary);
        let picked = select_nodes_greedy(&g, &scores, &tau1, 100 * GB);
        assert_eq!(labels(&g, &picked), ["v1", "v5", "v6"]);
    }

    #[test]
    fn greedy_zero_budget_flags_nothing() {
        let g = replica_toy();
        let scores = toy_scores(&g);
        let order = g.topo_order(TopoStrategy::BfsLayered);
        assert!(select_nodes_greedy(&g, &scores, &order, 0).is_empty());
        assert!(select_nodes_random(&g, &scores, &order, 0, 7).is_empty());
    }

    #[test]
    fn unbounded_budget_flags_all_scored_nodes() {
        let g = replica_toy();
        let scores = toy_scores(&g);
        let order = g.topo_order(TopoStrategy::BfsLayered);
        let budget = g.total_size();
        for set in [
            select_nodes_greedy(&g, &scores, &order, budget),
            select_nodes_ratio(&g, &scores, &order, budget),
        ] {
            assert_eq!(labels(&g, &set), ["v1", "v3", "v5", "v6"]);
        }
    }

    #[test]
    fn random_selection_is_reproducible_and_feasible() {
        let g = replica_toy();
        let scores = toy_scores(&g);
        let tau2 = g.topo_order(TopoStrategy::BfsLayered);
        let a = select_nodes_random(&g, &scores, &tau2, 100 * GB, 1234);
        let b = select_nodes_random(&g, &scores, &tau2, 100 * GB, 1234);
        assert_eq!(a, b);
        for seed in 0..200 {
            let set = select_nodes_random(&g, &scores, &tau2, 100 * GB, seed);
            assert!(g.peak_memory(&tau2, &set) <= 100 * GB, "seed {seed} violated budget");
        }
    }

    #[test]
    fn ratio_prefers_dense_scores() {
        // Both nodes share the sink's slot; only one fits.
        let g = DepGraph::new(
            vec![
                NodeMeta::new("big", 100),
                NodeMeta::new("small", 10),
                NodeMeta::new("sink", 0),
            ],
            vec![("big".into(), "sink".into()), ("small".into(), "sink".into())],
        )
        .unwrap();
        let scores = vec![100.0, 50.0, 0.0];
        let order = g.topo_order(TopoStrategy::BfsLayered);
        let picked = select_nodes_ratio(&g, &scores, &order, 100);
        assert_eq!(labels(&g, &picked), ["small"]);
    }

    #[test]
    fn ratio_flags_zero_size_first() {
        let g = DepGraph::new(
            vec![NodeMeta::new("free", 0), NodeMeta::new("paid", 10)],
            vec![("free".into(), "paid".into())],
        )
        .unwrap();
        let picked = select_nodes_ratio(&g, &[1.0, 100.0], &g.topo_order(TopoStrategy::BfsLayered), 10);
        assert!(picked.contains(g.node_id("free").unwrap()));
    }

    /// Brute-force optimum over all eligible subsets, by peak-memory check.
    fn brute_force_for_order(g: &DepGraph, scores: &[f64], order: &ExecOrder, budget: u64) -> f64 {
        let eligible: Vec<NodeId> = g
            .node_ids()
            .filter(|&v| is_eligible(g.size(v), scores[v.index()], budget))
            .collect();
        let mut best = 0.0f64;
        for mask in 0u32..(1 << eligible.len()) {
            let set: FlagSet = eligible
                .iter()
                .enumerate()
                .filter(|&(i, _)| mask >> i & 1 == 1)
                .map(|(_, &v)| v)
                .collect();
            if g.peak_memory(order, &set) <= budget {
                best = best.max(set.total_score(scores));
            }
        }
        best
    }

    #[test]
    fn mkp_matches_brute_force_on_small_dags() {
        let mut rng = seeded(0xC0FFEE);
        for trial in 0..60 {
            let n = rng.gen_range(3..=10);
            let g = random_dag(&mut rng, n, 0.35, 80, 9_000);
            let scores: Vec<f64> =
                g.node_ids().map(|v| g.meta(v).speedup_score.unwrap()).collect();
            let order = g.topo_order(TopoStrategy::BfsLayered);
            let budget = (g.total_size() / 2).max(1);
            let sel = select_nodes_mkp(&g, &scores, &order, budget, DEFAULT_NODE_CAP);
            assert!(sel.exact);
            let got = sel.flagged.total_score(&scores);
            let want = brute_force_for_order(&g, &scores, &order, budget);
            assert_eq!(got, want, "trial {trial}");
            assert!(g.peak_memory(&order, &sel.flagged) <= budget);
        }
    }

    #[test]
    fn selectors_always_feasible_and_mkp_dominates() {
        let mut rng = seeded(0xFEED);
        for _ in 0..250 {
            let n = rng.gen_range(2..=40);
            let g = random_dag(&mut rng, n, 0.15, 1_000, 5_000);
            let scores: Vec<f64> =
                g.node_ids().map(|v| g.meta(v).speedup_score.unwrap()).collect();
            let order = g.topo_order(TopoStrategy::BfsLayered);
            let budget = rng.gen_range(0..=g.total_size());
            let mkp = select_nodes_mkp(&g, &scores, &order, budget, DEFAULT_NODE_CAP);
            let greedy = select_nodes_greedy(&g, &scores, &order, budget);
            let random = select_nodes_random(&g, &scores, &order, budget, 99);
            let ratio = select_nodes_ratio(&g, &scores, &order, budget);
            for set in [&mkp.flagged, &greedy, &random, &ratio] {
                assert!(g.peak_memory(&order, set) <= budget);
            }
            assert!(mkp.flagged.total_score(&scores) >= greedy.total_score(&scores));
        }
    }

    #[test]
    fn pruned_family_matches_pairwise_subset_oracle() {
        let mut rng = seeded(0xABCD);
        for _ in 0..120 {
            let n = rng.gen_range(2..=25);
            let g = random_dag(&mut rng, n, 0.25, 100, 4_000);
            let scores: Vec<f64> =
                g.node_ids().map(|v| g.meta(v).speedup_score.unwrap()).collect();
            let order = g.topo_order(TopoStrategy::BfsLayered);
            let budget = (g.total_size() / 3).max(1);
            let raw = ConstraintFamily::raw(&g, &scores, &order, budget);
            let pruned = ConstraintFamily::derive(&g, &scores, &order, budget);

            // Oracle: maximal (no strict superset anywhere), non-trivial,
            // deduplicated.
            let mut oracle: Vec<&ConstraintSet> = raw
                .sets
                .iter()
                .filter(|a| a.total_size(&g) > budget)
                .filter(|a| {
                    !raw.sets
                        .iter()
                        .any(|b| a.members.len() < b.members.len() && a.is_subset_of(b))
                })
                .collect();
            oracle.dedup_by(|a, b| a.members == b.members);

            let got: Vec<&Vec<NodeId>> = pruned.sets.iter().map(|s| &s.members).collect();
            let want: Vec<&Vec<NodeId>> = oracle.iter().map(|s| &s.members).collect();
            assert_eq!(got, want);
        }
    }
}
