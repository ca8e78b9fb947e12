//! On-disk formats: workload, cost-model, plan, trace, and report JSON.
//!
//! Files store exact integer byte counts and decimal seconds. Unknown
//! fields are rejected so typos fail loudly. All writers are
//! deterministic: key order is fixed and sets are emitted sorted by
//! label.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{DepGraph, ExecOrder, FlagSet, GraphError, NodeMeta, OrderError, Plan};
use crate::scoring::{CostModel, CostModelError};
use crate::simulator::{SimEvent, SimReport};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Graph(#[from] GraphError),
    #[error("{0}")]
    Order(#[from] OrderError),
    #[error("invalid cost model: {0}")]
    CostModel(#[from] CostModelError),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: String,
    size_bytes: u64,
    speedup_score: Option<f64>,
    compute_seconds: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadDoc {
    nodes: Vec<NodeDoc>,
    edges: Vec<(String, String)>,
}

/// Parses and validates a workload document.
pub fn parse_workload(text: &str) -> Result<DepGraph, IoError> {
    let doc: WorkloadDoc = serde_json::from_str(text)?;
    let nodes = doc
        .nodes
        .into_iter()
        .map(|n| NodeMeta {
            label: n.id,
            size_bytes: n.size_bytes,
            speedup_score: n.speedup_score,
            compute_seconds: n.compute_seconds,
        })
        .collect();
    Ok(DepGraph::new(nodes, doc.edges)?)
}

pub fn serialize_workload(g: &DepGraph) -> String {
    let doc = WorkloadDoc {
        nodes: g
            .node_ids()
            .map(|v| {
                let meta = g.meta(v);
                NodeDoc {
                    id: meta.label.clone(),
                    size_bytes: meta.size_bytes,
                    speedup_score: meta.speedup_score,
                    compute_seconds: meta.compute_seconds,
                }
            })
            .collect(),
        edges: g
            .edges()
            .map(|(u, v)| (g.label(u).to_string(), g.label(v).to_string()))
            .collect(),
    };
    pretty(&doc)
}

pub fn parse_cost_model(text: &str) -> Result<CostModel, IoError> {
    let cm: CostModel = serde_json::from_str(text)?;
    cm.validate()?;
    Ok(cm)
}

pub fn serialize_cost_model(cm: &CostModel) -> String {
    pretty(cm)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanDoc {
    order: Vec<String>,
    flagged: Vec<String>,
    total_score: f64,
    peak_memory_bytes: u64,
    iterations: u32,
}

/// A plan as stored on disk, still label-based.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanFile {
    pub order: Vec<String>,
    pub flagged: Vec<String>,
    pub total_score: f64,
    pub peak_memory_bytes: u64,
    pub iterations: u32,
}

impl PlanFile {
    pub fn from_plan(g: &DepGraph, plan: &Plan, iterations: u32) -> Self {
        let mut flagged: Vec<String> =
            plan.flagged.iter().map(|v| g.label(v).to_string()).collect();
        flagged.sort();
        PlanFile {
            order: plan.order.sequence().iter().map(|&v| g.label(v).to_string()).collect(),
            flagged,
            total_score: plan.total_score,
            peak_memory_bytes: plan.peak_memory,
            iterations,
        }
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        let doc: PlanDoc = serde_json::from_str(text)?;
        Ok(PlanFile {
            order: doc.order,
            flagged: doc.flagged,
            total_score: doc.total_score,
            peak_memory_bytes: doc.peak_memory_bytes,
            iterations: doc.iterations,
        })
    }

    /// Binds the file to a graph, validating that the order is a
    /// topological permutation and every flagged id exists.
    pub fn resolve(&self, g: &DepGraph) -> Result<Plan, IoError> {
        let seq = self
            .order
            .iter()
            .map(|label| g.resolve(label))
            .collect::<Result<Vec<_>, _>>()?;
        let order = ExecOrder::new(g, seq)?;
        let flagged = self
            .flagged
            .iter()
            .map(|label| g.resolve(label))
            .collect::<Result<FlagSet, _>>()?;
        Ok(Plan {
            order,
            flagged,
            total_score: self.total_score,
            peak_memory: self.peak_memory_bytes,
        })
    }

    pub fn to_json(&self) -> String {
        let doc = PlanDoc {
            order: self.order.clone(),
            flagged: self.flagged.clone(),
            total_score: self.total_score,
            peak_memory_bytes: self.peak_memory_bytes,
            iterations: self.iterations,
        };
        pretty(&doc)
    }
}

#[derive(Serialize, Deserialize)]
struct EventDoc {
    time: f64,
    kind: crate::simulator::EventKind,
    node: String,
}

/// Serializes the event list verbatim, labels substituted for indices.
pub fn serialize_trace(g: &DepGraph, events: &[SimEvent]) -> String {
    let docs: Vec<EventDoc> = events
        .iter()
        .map(|e| EventDoc { time: e.time, kind: e.kind, node: g.label(e.node).to_string() })
        .collect();
    pretty(&docs)
}

/// Summary of a simulation run, the timeline excluded.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportDoc {
    pub end_to_end_seconds: f64,
    pub baseline_seconds: f64,
    pub realized_savings_seconds: f64,
    pub model_peak_bytes: u64,
    pub realized_peak_bytes: u64,
    pub budget_bytes: u64,
    pub budget_violated: bool,
}

impl From<&SimReport> for ReportDoc {
    fn from(report: &SimReport) -> Self {
        ReportDoc {
            end_to_end_seconds: report.end_to_end,
            baseline_seconds: report.baseline_end_to_end,
            realized_savings_seconds: report.realized_savings,
            model_peak_bytes: report.model_peak,
            realized_peak_bytes: report.realized_peak,
            budget_bytes: report.budget,
            budget_violated: report.budget_violated,
        }
    }
}

pub fn serialize_report(report: &SimReport) -> String {
    pretty(&ReportDoc::from(report))
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serialization cannot fail");
    text.push('\n');
    text
}
