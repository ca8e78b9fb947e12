//! Discrete-event replay of a plan: one compute lane executing nodes in
//! plan order, one background lane draining flagged outputs to disk FIFO.
//!
//! A node's duration is its parent reads (from memory when the parent is
//! flagged — an entry outlives all its dependents by construction, so
//! such reads always hit the catalog), its compute time, and its output
//! write (to memory when flagged, else disk). A flagged output starts
//! materializing once created and is freed only when both its last
//! dependent has finished and its own materialization is done, which is
//! why the realized peak can exceed the optimizer's model peak under slow
//! disk writes; the report exposes both.

use serde::{Deserialize, Serialize};

use crate::graph::{DepGraph, NodeId, Plan};
use crate::scoring::CostModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ComputeStart,
    Read,
    MemWriteEnd,
    ComputeEnd,
    MaterializeStart,
    MaterializeEnd,
    CatalogFree,
}

/// Timeline entry. For `Read` events the node is the parent being read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub time: f64,
    pub kind: EventKind,
    pub node: NodeId,
}

/// Outcome of one simulated refresh run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    /// Both lanes idle, all nodes executed and materialized.
    pub end_to_end: f64,
    /// The same run with nothing flagged: serial disk reads and writes.
    pub baseline_end_to_end: f64,
    /// `baseline_end_to_end - end_to_end`.
    pub realized_savings: f64,
    /// Position-interval peak the optimizer reasons about.
    pub model_peak: u64,
    /// Peak of actual catalog residency, including materialization delay.
    pub realized_peak: u64,
    pub budget: u64,
    /// True when realized residency exceeded the budget.
    pub budget_violated: bool,
    /// Time-ordered trace.
    pub events: Vec<SimEvent>,
}

/// Replays `plan` under the cost model. Runs even when the plan is
/// infeasible at the model level; violations surface in the report.
pub fn simulate(g: &DepGraph, plan: &Plan, cm: &CostModel, budget: u64) -> SimReport {
    let n = g.len();
    let order = &plan.order;
    let flagged = &plan.flagged;

    let mut events: Vec<SimEvent> = Vec::new();
    let mut compute_end = vec![0.0f64; n];
    let mut materialize_end: Vec<Option<f64>> = vec![None; n];
    let mut compute_start = vec![0.0f64; n];

    let mut clock = 0.0f64; // compute lane
    let mut bg_free = 0.0f64; // background materialization lane
    for p in 1..=n {
        let v = order.node_at(p);
        compute_start[v.index()] = clock;
        events.push(SimEvent { time: clock, kind: EventKind::ComputeStart, node: v });
        for &parent in g.parents(v) {
            let bytes = g.size(parent);
            clock += if flagged.contains(parent) { cm.mem_read(bytes) } else { cm.disk_read(bytes) };
            events.push(SimEvent { time: clock, kind: EventKind::Read, node: parent });
        }
        clock += g.compute_seconds(v);
        if flagged.contains(v) {
            clock += cm.mem_write(g.size(v));
            events.push(SimEvent { time: clock, kind: EventKind::MemWriteEnd, node: v });
        } else {
            clock += cm.disk_write(g.size(v));
        }
        compute_end[v.index()] = clock;
        events.push(SimEvent { time: clock, kind: EventKind::ComputeEnd, node: v });

        if flagged.contains(v) {
            let start = bg_free.max(clock);
            let end = start + cm.disk_write(g.size(v));
            events.push(SimEvent { time: start, kind: EventKind::MaterializeStart, node: v });
            events.push(SimEvent { time: end, kind: EventKind::MaterializeEnd, node: v });
            materialize_end[v.index()] = Some(end);
            bg_free = end;
        }
    }

    let end_to_end = clock.max(bg_free);

    // Catalog residency: creation start through max(last dependent done,
    // own materialization done).
    let mut residency: Vec<(f64, f64, u64)> = Vec::with_capacity(flagged.len());
    for v in flagged.iter() {
        let dependents_done = g
            .children(v)
            .iter()
            .map(|c| compute_end[c.index()])
            .fold(compute_end[v.index()], f64::max);
        let free_at = dependents_done.max(materialize_end[v.index()].unwrap());
        events.push(SimEvent { time: free_at, kind: EventKind::CatalogFree, node: v });
        residency.push((compute_start[v.index()], free_at, g.size(v)));
    }
    let realized_peak = sweep_peak(&residency);

    events.sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap());

    let baseline_end_to_end = baseline_time(g, plan, cm);
    SimReport {
        end_to_end,
        baseline_end_to_end,
        realized_savings: baseline_end_to_end - end_to_end,
        model_peak: g.peak_memory(order, flagged),
        realized_peak,
        budget,
        budget_violated: realized_peak > budget,
        events,
    }
}

/// Maximum overlap of half-open residency intervals.
fn sweep_peak(residency: &[(f64, f64, u64)]) -> u64 {
    let mut edges: Vec<(f64, bool, u64)> = Vec::with_capacity(residency.len() * 2);
    for &(from, to, size) in residency {
        edges.push((from, true, size));
        edges.push((to, false, size));
    }
    // Releases sort before acquisitions at the same instant.
    edges.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1)));
    let mut current: i128 = 0;
    let mut peak: i128 = 0;
    for (_, acquire, size) in edges {
        if acquire {
            current += i128::from(size);
            peak = peak.max(current);
        } else {
            current -= i128::from(size);
        }
    }
    peak as u64
}

/// Closed-form duration of the unoptimized serial run: every read and
/// write hits disk, nothing overlaps. Accumulated in plan order so it is
/// bit-identical to `simulate` with an empty flag set.
pub fn baseline_time(g: &DepGraph, plan: &Plan, cm: &CostModel) -> f64 {
    let mut total = 0.0f64;
    for p in 1..=g.len() {
        let v = plan.order.node_at(p);
        for &parent in g.parents(v) {
            total += cm.disk_read(g.size(parent));
        }
        total += g.compute_seconds(v);
        total += cm.disk_write(g.size(v));
    }
    total
}
