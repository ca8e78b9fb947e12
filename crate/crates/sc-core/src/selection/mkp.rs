//! Exact 0-1 multidimensional knapsack via depth-first branch-and-bound.
//!
//! Variables are explored in descending profit/weight ratio (weight taken
//! as the column sum over all constraint rows). The upper bound at each
//! node is the fractional optimum of the surrogate single-knapsack formed
//! by summing every row, which dominates the true optimum because any
//! point satisfying all rows satisfies their sum. The incumbent is
//! warm-started with a ratio-greedy pass so pruning bites early.

use crate::graph::{DepGraph, NodeId};

use super::{profit_ms, ConstraintFamily};

/// Dense knapsack instance. Every row shares the same capacity (the
/// memory budget); a weight is the node size where the variable belongs
/// to the row's constraint set and zero otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MkpInstance {
    /// Integral millisecond profits, one per variable. Always positive.
    pub profits: Vec<u64>,
    /// rows x variables.
    pub weights: Vec<Vec<u64>>,
    pub capacity: u64,
    /// Variable index -> node, ascending by node index.
    pub vars: Vec<NodeId>,
}

impl MkpInstance {
    pub fn from_family(
        g: &DepGraph,
        scores: &[f64],
        family: &ConstraintFamily,
        budget: u64,
    ) -> Self {
        let vars = family.variables();
        let profits = vars.iter().map(|&v| profit_ms(scores[v.index()])).collect();
        let weights = family
            .sets
            .iter()
            .map(|set| {
                vars.iter()
                    .map(|v| if set.members.binary_search(v).is_ok() { g.size(*v) } else { 0 })
                    .collect()
            })
            .collect();
        MkpInstance { profits, weights, capacity: budget, vars }
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.weights.len()
    }
}

/// Solver outcome. `take[i]` answers for `instance.vars[i]`; `exact` is
/// false when the expansion cap was hit and the best incumbent was
/// returned instead of a proven optimum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MkpSolution {
    pub take: Vec<bool>,
    pub objective_ms: u64,
    pub exact: bool,
    pub expanded: u64,
}

struct Search<'a> {
    profits: &'a [u64],
    /// Per variable: the rows it participates in, with its weight there.
    rows_of: Vec<Vec<(u32, u64)>>,
    surrogate: Vec<u64>,
    suffix_profit: Vec<u64>,
    capacity: u64,
    loads: Vec<u64>,
    surrogate_load: u64,
    surrogate_capacity: u64,
    current: Vec<bool>,
    current_profit: u64,
    best: Vec<bool>,
    best_profit: u64,
    expanded: u64,
    cap: u64,
    timed_out: bool,
}

impl Search<'_> {
    /// Fractional optimum of the surrogate knapsack over variables
    /// `from..`, floored (profits are integral, so flooring keeps the
    /// bound valid).
    fn bound(&self, from: usize) -> u64 {
        let mut left = self.surrogate_capacity - self.surrogate_load;
        let mut total: u64 = 0;
        for j in from..self.profits.len() {
            let w = self.surrogate[j];
            if w <= left {
                total += self.profits[j];
                left -= w;
            } else {
                total += ((self.profits[j] as u128 * left as u128) / w as u128) as u64;
                break;
            }
        }
        total
    }

    fn fits(&self, j: usize) -> bool {
        self.rows_of[j].iter().all(|&(r, w)| self.loads[r as usize] + w <= self.capacity)
    }

    fn dfs(&mut self, j: usize) {
        if self.timed_out {
            return;
        }
        self.expanded += 1;
        if self.expanded > self.cap {
            self.timed_out = true;
            return;
        }
        if j == self.profits.len() {
            if self.current_profit > self.best_profit {
                self.best_profit = self.current_profit;
                self.best = self.current.clone();
            }
            return;
        }
        if self.current_profit + self.suffix_profit[j].min(self.bound(j)) <= self.best_profit {
            return;
        }
        if self.fits(j) {
            for &(r, w) in &self.rows_of[j] {
                self.loads[r as usize] += w;
            }
            self.surrogate_load += self.surrogate[j];
            self.current[j] = true;
            self.current_profit += self.profits[j];
            self.dfs(j + 1);
            self.current_profit -= self.profits[j];
            self.current[j] = false;
            self.surrogate_load -= self.surrogate[j];
            for &(r, w) in &self.rows_of[j] {
                self.loads[r as usize] -= w;
            }
        }
        self.dfs(j + 1);
    }
}

/// Exact, deterministic solve. `node_cap` bounds branch-and-bound node
/// expansions; hitting it degrades to the best incumbent with
/// `exact: false`.
pub fn solve_mkp(instance: &MkpInstance, node_cap: u64) -> MkpSolution {
    let l = instance.num_vars();
    if l == 0 {
        return MkpSolution { take: vec![], objective_ms: 0, exact: true, expanded: 0 };
    }

    // Ratio order, comparing p_a/w_a vs p_b/w_b by cross-multiplication so
    // the order is exact; zero-weight variables sort first.
    let mut order: Vec<usize> = (0..l).collect();
    let surrogate_raw: Vec<u64> = (0..l)
        .map(|j| instance.weights.iter().map(|row| row[j]).sum())
        .collect();
    order.sort_unstable_by(|&a, &b| {
        let lhs = instance.profits[a] as u128 * surrogate_raw[b] as u128;
        let rhs = instance.profits[b] as u128 * surrogate_raw[a] as u128;
        rhs.cmp(&lhs).then_with(|| instance.vars[a].cmp(&instance.vars[b]))
    });

    let profits: Vec<u64> = order.iter().map(|&j| instance.profits[j]).collect();
    let surrogate: Vec<u64> = order.iter().map(|&j| surrogate_raw[j]).collect();
    let rows_of: Vec<Vec<(u32, u64)>> = order
        .iter()
        .map(|&j| {
            instance
                .weights
                .iter()
                .enumerate()
                .filter(|(_, row)| row[j] > 0)
                .map(|(r, row)| (r as u32, row[j]))
                .collect()
        })
        .collect();

    let mut suffix_profit = vec![0u64; l + 1];
    for j in (0..l).rev() {
        suffix_profit[j] = suffix_profit[j + 1] + profits[j];
    }

    let mut search = Search {
        profits: &profits,
        rows_of,
        surrogate,
        suffix_profit,
        capacity: instance.capacity,
        loads: vec![0; instance.num_rows()],
        surrogate_load: 0,
        surrogate_capacity: instance.capacity.saturating_mul(instance.num_rows() as u64),
        current: vec![false; l],
        current_profit: 0,
        best: vec![false; l],
        best_profit: 0,
        expanded: 0,
        cap: node_cap,
        timed_out: false,
    };

    // Greedy incumbent in ratio order.
    {
        let mut loads = vec![0u64; instance.num_rows()];
        let mut take = vec![false; l];
        let mut profit = 0u64;
        for j in 0..l {
            if search.rows_of[j].iter().all(|&(r, w)| loads[r as usize] + w <= instance.capacity) {
                for &(r, w) in &search.rows_of[j] {
                    loads[r as usize] += w;
                }
                take[j] = true;
                profit += profits[j];
            }
        }
        search.best = take;
        search.best_profit = profit;
    }

    search.dfs(0);

    let mut take = vec![false; l];
    for (slot, &var) in order.iter().enumerate() {
        take[var] = search.best[slot];
    }
    MkpSolution {
        take,
        objective_ms: search.best_profit,
        exact: !search.timed_out,
        expanded: search.expanded,
    }
}
