//! Joint optimization of refresh order and bounded in-memory caching for
//! DAG-shaped materialized-view refresh workloads, plus a discrete-event
//! simulator that replays a plan against a physical cost model.
//!
//! The pipeline: model the workload as a [`graph::DepGraph`], derive
//! speedup scores from a [`scoring::CostModel`] when the workload file
//! does not carry them, then alternate between exact node selection
//! ([`selection`]) and memory-aware ordering ([`ordering`]) until the
//! total speedup score stops improving ([`alternating::optimize`]). The
//! resulting [`graph::Plan`] can be replayed by [`simulator::simulate`]
//! to report end-to-end time and realized memory behavior.

pub mod alternating;
pub mod graph;
pub mod io;
pub mod ordering;
pub mod scoring;
pub mod selection;
pub mod simulator;
pub mod workgen;

#[cfg(test)]
pub(crate) mod test_util;

pub use graph::{DepGraph, ExecOrder, FlagSet, NodeId, NodeMeta, Plan, TopoStrategy};
pub use scoring::CostModel;
