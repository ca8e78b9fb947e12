//! Execution-order search for a fixed flag set: minimize average memory
//! usage so flagged outputs leave the catalog as soon as possible.
//!
//! The primary algorithm is a memory-aware DFS-style schedule; simulated
//! annealing over adjacent swaps and a recursive directed-cut separator
//! serve as baselines.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{DepGraph, ExecOrder, FlagSet, NodeId};

/// Memory-aware DFS scheduling.
///
/// Maintains the ready set (all parents executed) and always executes the
/// best candidate under a three-part key: avoid placements whose slot
/// would push resident flagged bytes over the budget, then minimize the
/// net catalog effect — the candidate's own actual memory consumption
/// (size if flagged, zero otherwise) minus the bytes of flagged parents
/// it would release as their last pending dependent. Ties prefer the most
/// recently readied candidate, so execution keeps finishing the current
/// branch before opening another, then the smallest label.
pub fn order_madfs(g: &DepGraph, flags: &FlagSet, budget: u64) -> ExecOrder {
    let n = g.len();
    let mut missing: Vec<usize> = g.node_ids().map(|v| g.parents(v).len()).collect();
    // Children not yet executed; a flagged node occupies the catalog
    // while this is positive.
    let mut pending: Vec<usize> = g.node_ids().map(|v| g.children(v).len()).collect();
    let mut ready: Vec<(u32, NodeId)> = Vec::new();
    let mut stamp = 0u32;
    for v in g.node_ids() {
        if missing[v.index()] == 0 {
            ready.push((stamp, v));
        }
    }
    // Executed flagged nodes with dependents still pending.
    let mut resident: i128 = 0;
    let mut seq = Vec::with_capacity(n);
    while !ready.is_empty() {
        let mut best_slot = 0;
        let mut best_key = (true, i128::MAX, i128::MAX, std::cmp::Reverse(0u32), u32::MAX);
        for (slot, &(ready_stamp, x)) in ready.iter().enumerate() {
            // Flagged parents released by x still share x's slot, so the
            // slot load ignores releases.
            let slot_load = resident
                + if flags.contains(x) { i128::from(g.size(x)) } else { 0 };
            let opened = if flags.contains(x) && pending[x.index()] > 0 {
                i128::from(g.size(x))
            } else {
                0
            };
            let released: i128 = g
                .parents(x)
                .iter()
                .filter(|&&p| flags.contains(p) && pending[p.index()] == 1)
                .map(|&p| i128::from(g.size(p)))
                .sum();
            let key = (
                slot_load > i128::from(budget),
                slot_load,
                opened - released,
                std::cmp::Reverse(ready_stamp),
                g.label_rank(x),
            );
            if key < best_key {
                best_key = key;
                best_slot = slot;
            }
        }
        let (_, v) = ready.swap_remove(best_slot);
        seq.push(v);
        stamp += 1;
        for &p in g.parents(v) {
            pending[p.index()] -= 1;
            if pending[p.index()] == 0 && flags.contains(p) {
                resident -= i128::from(g.size(p));
            }
        }
        if flags.contains(v) && pending[v.index()] > 0 {
            resident += i128::from(g.size(v));
        }
        for &w in g.children(v) {
            missing[w.index()] -= 1;
            if missing[w.index()] == 0 {
                ready.push((stamp, w));
            }
        }
    }
    debug_assert_eq!(seq.len(), n);
    ExecOrder::new_unchecked(seq)
}

/// The plain DFS-style schedule MA-DFS collapses to when nothing is
/// flagged: branch continuation with label tie-break only.
pub fn order_plain_dfs(g: &DepGraph) -> ExecOrder {
    g.topo_order(crate::graph::TopoStrategy::Dfs)
}

/// Simulated annealing over adjacent-position swaps.
///
/// A swap of positions (i, i+1) is valid iff no edge joins the two nodes;
/// improving swaps are always accepted, worsening ones with probability
/// `exp(-delta/T)` under geometric cooling. Returns the best order
/// visited, which is never worse than `initial`.
pub fn order_sa(
    g: &DepGraph,
    flags: &FlagSet,
    initial: &ExecOrder,
    iterations: u32,
    seed: u64,
) -> ExecOrder {
    let n = g.len();
    if n < 2 || iterations == 0 {
        return initial.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seq: Vec<NodeId> = initial.sequence().to_vec();
    let mut pos: Vec<usize> = vec![0; n];
    for (i, v) in seq.iter().enumerate() {
        pos[v.index()] = i + 1;
    }

    // Exact integer objective: sum over flagged nodes of span length
    // times size (average memory usage scaled by n).
    let cost_of = |v: NodeId, pos: &[usize]| -> u128 {
        if !flags.contains(v) {
            return 0;
        }
        let start = pos[v.index()];
        let end = g.children(v).iter().map(|c| pos[c.index()]).max().unwrap_or(start);
        (end - start) as u128 * u128::from(g.size(v))
    };
    let mut current: u128 = seq.iter().map(|&v| cost_of(v, &pos)).sum();
    let mut best = current;
    let mut best_seq = seq.clone();

    let mut temperature = (current as f64 / n as f64) / 10.0;
    const COOLING: f64 = 0.999;

    for _ in 0..iterations {
        temperature *= COOLING;
        let i = rng.gen_range(0..n - 1);
        let (a, b) = (seq[i], seq[i + 1]);
        // b -> a is impossible in a topological order, so only a -> b can
        // block the swap.
        if g.has_edge(a, b) {
            continue;
        }

        // Only a, b, and their flagged parents can change cost.
        let mut touched: Vec<NodeId> = vec![a, b];
        touched.extend(g.parents(a).iter().copied());
        touched.extend(g.parents(b).iter().copied());
        touched.sort_unstable();
        touched.dedup();

        let before: u128 = touched.iter().map(|&v| cost_of(v, &pos)).sum();
        pos[a.index()] = i + 2;
        pos[b.index()] = i + 1;
        let after: u128 = touched.iter().map(|&v| cost_of(v, &pos)).sum();

        let delta = after as i128 - before as i128;
        let accept = delta < 0
            || (temperature > 0.0 && rng.gen::<f64>() < (-(delta as f64) / (n as f64 * temperature)).exp());
        if accept {
            seq.swap(i, i + 1);
            current = current + after - before;
            if current < best {
                best = current;
                best_seq = seq.clone();
            }
        } else {
            pos[a.index()] = i + 1;
            pos[b.index()] = i + 2;
        }
    }
    ExecOrder::new_unchecked(best_seq)
}

/// Outcome of the separator baseline. The divide-and-conquer cut search
/// cannot honor the memory budget, so infeasible orders are a valid,
/// expected result the caller must handle.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparatorOutcome {
    pub order: ExecOrder,
    /// Whether the order keeps peak memory within the supplied budget.
    pub feasible: bool,
}

/// Recursive directed bisection: split the node set by a forward-only cut
/// minimizing the flagged bytes crossing it (balanced within ±25% of
/// half), order each side recursively, and concatenate.
pub fn order_separator(
    g: &DepGraph,
    flags: &FlagSet,
    budget: u64,
) -> SeparatorOutcome {
    let all: Vec<NodeId> = g.node_ids().collect();
    let mut seq = Vec::with_capacity(g.len());
    bisect(g, flags, all, &mut seq);
    let order = ExecOrder::new_unchecked(seq);
    let feasible = g.peak_memory(&order, flags) <= budget;
    SeparatorOutcome { order, feasible }
}

fn bisect(g: &DepGraph, flags: &FlagSet, part: Vec<NodeId>, out: &mut Vec<NodeId>) {
    let n = part.len();
    if n <= 1 {
        out.extend(part);
        return;
    }

    // Greedy topological accumulation of the left side. At each step take
    // the available node with the smallest marginal crossing cost (bytes
    // of flagged nodes in the prefix that still have a child outside it),
    // recording the prefix cost after every addition.
    let in_part: BTreeSet<NodeId> = part.iter().copied().collect();
    let mut missing: std::collections::HashMap<NodeId, usize> = part
        .iter()
        .map(|&v| (v, g.parents(v).iter().filter(|p| in_part.contains(p)).count()))
        .collect();
    // Children counts inside this partition that are still outside the
    // prefix; a flagged prefix node with pending children crosses the cut.
    let mut pending: std::collections::HashMap<NodeId, usize> = part
        .iter()
        .map(|&v| (v, g.children(v).iter().filter(|c| in_part.contains(c)).count()))
        .collect();

    let mut available: BTreeSet<(u32, NodeId)> = part
        .iter()
        .filter(|&&v| missing[&v] == 0)
        .map(|&v| (g.label_rank(v), v))
        .collect();
    let mut crossing: u64 = 0;
    let mut prefix: Vec<NodeId> = Vec::with_capacity(n);
    let mut cost_at: Vec<u64> = Vec::with_capacity(n);

    while prefix.len() < n {
        // Marginal cost of adding x: x starts crossing if flagged with
        // pending children; each parent whose last pending child was x
        // stops crossing.
        let (cost_after, _, chosen) = available
            .iter()
            .map(|&(rank, x)| {
                let mut cost = crossing;
                if flags.contains(x) && pending[&x] > 0 {
                    cost += g.size(x);
                }
                for p in g.parents(x) {
                    if in_part.contains(p) && flags.contains(*p) && pending[p] == 1 {
                        cost -= g.size(*p);
                    }
                }
                (cost, rank, x)
            })
            .min()
            .unwrap();
        available.remove(&(g.label_rank(chosen), chosen));
        crossing = cost_after;
        prefix.push(chosen);
        cost_at.push(crossing);
        for &w in g.children(chosen) {
            if in_part.contains(&w) {
                let m = missing.get_mut(&w).unwrap();
                *m -= 1;
                if *m == 0 {
                    available.insert((g.label_rank(w), w));
                }
            }
        }
        for p in g.parents(chosen) {
            if in_part.contains(p) {
                *pending.get_mut(p).unwrap() -= 1;
            }
        }
    }

    // Balanced window: within ±25% of half the partition.
    let lo = ((0.375 * n as f64).floor() as usize).max(1);
    let hi = ((0.625 * n as f64).ceil() as usize).min(n - 1);
    let half = n as f64 / 2.0;
    let split = (lo..=hi)
        .min_by(|&a, &b| {
            cost_at[a - 1]
                .cmp(&cost_at[b - 1])
                .then_with(|| {
                    let da = (a as f64 - half).abs();
                    let db = (b as f64 - half).abs();
                    da.partial_cmp(&db).unwrap()
                })
                .then_with(|| a.cmp(&b))
        })
        .unwrap();

    let right = prefix.split_off(split);
    bisect(g, flags, prefix, out);
    bisect(g, flags, right, out);
}
