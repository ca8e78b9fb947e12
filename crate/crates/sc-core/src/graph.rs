//! Dependency-graph data model: nodes with sizes and speedup scores,
//! dependency edges, topological orders, flag sets, and the memory-usage
//! computations the optimizer and simulator are built on.
//!
//! A node is one refresh job; an edge `(parent, child)` means the child
//! reads the parent's output. Flagging a node keeps its output in the
//! memory catalog from its own execution slot until its last dependent
//! has executed, so memory accounting reduces to interval arithmetic
//! over execution positions (1-based, mirroring the order `τ: [1..n]`).

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

/// Dense index of a node within its [`DepGraph`].
///
/// External formats use string labels; the index is only meaningful for
/// the graph that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub(crate) fn new(index: usize) -> Self {
        NodeId(index as u32)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Per-node execution metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMeta {
    /// External label, unique within the graph.
    pub label: String,
    /// Output size in bytes (the memory the node occupies when flagged).
    pub size_bytes: u64,
    /// Estimated end-to-end seconds saved by flagging this node, if known.
    /// Missing scores are derived from a cost model.
    pub speedup_score: Option<f64>,
    /// Pure compute seconds, excluding reads and writes. Used by the
    /// simulator; defaults to zero when absent.
    pub compute_seconds: Option<f64>,
}

impl NodeMeta {
    pub fn new(label: impl Into<String>, size_bytes: u64) -> Self {
        NodeMeta {
            label: label.into(),
            size_bytes,
            speedup_score: None,
            compute_seconds: None,
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.speedup_score = Some(score);
        self
    }

    pub fn with_compute(mut self, seconds: f64) -> Self {
        self.compute_seconds = Some(seconds);
        self
    }
}

/// Graph construction/validation failures.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("duplicate node id `{0}`")]
    DuplicateId(String),
    #[error("edge endpoint references unknown node `{0}`")]
    DanglingEdge(String),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(String, String),
    #[error("dependency cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node {0} has negative {1}")]
    NegativeMetric(String, &'static str),
}

/// Validation failures for externally supplied execution orders.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OrderError {
    #[error("order lists {got} nodes, graph has {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("order is not a permutation: `{0}` appears more than once or not at all")]
    NotPermutation(String),
    #[error("order violates dependency {parent} -> {child}")]
    NotTopological { parent: String, child: String },
}

/// Immutable DAG of refresh jobs.
///
/// All invariants (unique labels, acyclicity, no self-loops, no duplicate
/// edges, no dangling endpoints) are enforced at construction; every
/// later operation may assume them.
#[derive(Debug, Clone, PartialEq)]
pub struct DepGraph {
    nodes: Vec<NodeMeta>,
    children: Vec<Vec<NodeId>>,
    parents: Vec<Vec<NodeId>>,
    label_index: HashMap<String, NodeId>,
    /// Rank of each node's label in ascending label order; used for the
    /// deterministic label tie-breaks.
    label_rank: Vec<u32>,
    edge_count: usize,
}

impl DepGraph {
    /// Builds and validates a graph. Edges are given by node label.
    pub fn new(
        nodes: Vec<NodeMeta>,
        edges: Vec<(String, String)>,
    ) -> Result<Self, GraphError> {
        let mut label_index = HashMap::with_capacity(nodes.len());
        for (i, meta) in nodes.iter().enumerate() {
            if meta.speedup_score.is_some_and(|s| s < 0.0) {
                return Err(GraphError::NegativeMetric(meta.label.clone(), "speedup_score"));
            }
            if meta.compute_seconds.is_some_and(|s| s < 0.0) {
                return Err(GraphError::NegativeMetric(meta.label.clone(), "compute_seconds"));
            }
            if label_index.insert(meta.label.clone(), NodeId::new(i)).is_some() {
                return Err(GraphError::DuplicateId(meta.label.clone()));
            }
        }

        let n = nodes.len();
        let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        let mut parents: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for (src, dst) in &edges {
            let &u = label_index
                .get(src)
                .ok_or_else(|| GraphError::DanglingEdge(src.clone()))?;
            let &v = label_index
                .get(dst)
                .ok_or_else(|| GraphError::DanglingEdge(dst.clone()))?;
            if u == v {
                return Err(GraphError::Cycle(vec![src.clone()]));
            }
            if !seen.insert((u, v)) {
                return Err(GraphError::DuplicateEdge(src.clone(), dst.clone()));
            }
            children[u.index()].push(v);
            parents[v.index()].push(u);
        }
        for list in children.iter_mut().chain(parents.iter_mut()) {
            list.sort_unstable();
        }

        let mut rank_order: Vec<usize> = (0..n).collect();
        rank_order.sort_unstable_by(|&a, &b| nodes[a].label.cmp(&nodes[b].label));
        let mut label_rank = vec![0u32; n];
        for (rank, &i) in rank_order.iter().enumerate() {
            label_rank[i] = rank as u32;
        }

        let g = DepGraph {
            nodes,
            children,
            parents,
            label_index,
            label_rank,
            edge_count: edges.len(),
        };
        if let Some(cycle) = g.find_cycle() {
            return Err(GraphError::Cycle(cycle));
        }
        Ok(g)
    }

    /// Locates one cycle, if any, as a label sequence.
    fn find_cycle(&self) -> Option<Vec<String>> {
        // Iterative coloring DFS; `on_stack` members form the current path.
        const WHITE: u8 = 0;
        const GRAY: u8 = 1;
        const BLACK: u8 = 2;
        let n = self.len();
        let mut color = vec![WHITE; n];
        let mut stack: Vec<(usize, usize)> = Vec::new();
        let mut path: Vec<usize> = Vec::new();
        for start in 0..n {
            if color[start] != WHITE {
                continue;
            }
            color[start] = GRAY;
            path.push(start);
            stack.push((start, 0));
            while let Some(&mut (v, ref mut edge)) = stack.last_mut() {
                if *edge < self.children[v].len() {
                    let w = self.children[v][*edge].index();
                    *edge += 1;
                    match color[w] {
                        WHITE => {
                            color[w] = GRAY;
                            path.push(w);
                            stack.push((w, 0));
                        }
                        GRAY => {
                            let from = path.iter().position(|&p| p == w).unwrap();
                            return Some(
                                path[from..].iter().map(|&p| self.nodes[p].label.clone()).collect(),
                            );
                        }
                        _ => {}
                    }
                } else {
                    color[v] = BLACK;
                    stack.pop();
                    path.pop();
                }
            }
        }
        None
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.len()).map(NodeId::new)
    }

    pub fn node_id(&self, label: &str) -> Option<NodeId> {
        self.label_index.get(label).copied()
    }

    /// Like [`Self::node_id`] but failing with [`GraphError::UnknownNode`].
    pub fn resolve(&self, label: &str) -> Result<NodeId, GraphError> {
        self.node_id(label)
            .ok_or_else(|| GraphError::UnknownNode(label.to_string()))
    }

    pub fn label(&self, v: NodeId) -> &str {
        &self.nodes[v.index()].label
    }

    pub fn meta(&self, v: NodeId) -> &NodeMeta {
        &self.nodes[v.index()]
    }

    pub fn size(&self, v: NodeId) -> u64 {
        self.nodes[v.index()].size_bytes
    }

    pub fn compute_seconds(&self, v: NodeId) -> f64 {
        self.nodes[v.index()].compute_seconds.unwrap_or(0.0)
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.children[v.index()]
    }

    pub fn parents(&self, v: NodeId) -> &[NodeId] {
        &self.parents[v.index()]
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.children[u.index()].binary_search(&v).is_ok()
    }

    /// All edges in deterministic (parent index, child index) order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.node_ids()
            .flat_map(move |u| self.children(u).iter().map(move |&v| (u, v)))
    }

    pub(crate) fn label_rank(&self, v: NodeId) -> u32 {
        self.label_rank[v.index()]
    }

    /// Total bytes over all node outputs.
    pub fn total_size(&self) -> u64 {
        self.nodes.iter().map(|m| m.size_bytes).sum()
    }

    /// Deterministic topological order; ties broken by ascending label.
    pub fn topo_order(&self, strategy: TopoStrategy) -> ExecOrder {
        match strategy {
            TopoStrategy::Arbitrary => self.topo_kahn(),
            TopoStrategy::BfsLayered => self.topo_layered(),
            TopoStrategy::Dfs => self.topo_dfs(),
        }
    }

    /// Kahn's algorithm with a single ready pool, always taking the
    /// smallest label.
    fn topo_kahn(&self) -> ExecOrder {
        let n = self.len();
        let mut indegree: Vec<usize> = (0..n).map(|i| self.parents[i].len()).collect();
        let mut ready: BTreeSet<(u32, NodeId)> = (0..n)
            .filter(|&i| indegree[i] == 0)
            .map(|i| (self.label_rank[i], NodeId::new(i)))
            .collect();
        let mut seq = Vec::with_capacity(n);
        while let Some(&(rank, v)) = ready.iter().next() {
            ready.remove(&(rank, v));
            seq.push(v);
            for &w in self.children(v) {
                indegree[w.index()] -= 1;
                if indegree[w.index()] == 0 {
                    ready.insert((self.label_rank[w.index()], w));
                }
            }
        }
        debug_assert_eq!(seq.len(), n);
        ExecOrder::new_unchecked(seq)
    }

    /// Branch-continuing DFS over the ready set: children readied by the
    /// node just executed outrank older ready nodes, ties by label.
    fn topo_dfs(&self) -> ExecOrder {
        let n = self.len();
        let mut ready: BTreeSet<(std::cmp::Reverse<u32>, u32, NodeId)> = BTreeSet::new();
        let mut indegree: Vec<usize> = (0..n).map(|i| self.parents[i].len()).collect();
        let mut stamp = 0u32;
        for i in 0..n {
            if indegree[i] == 0 {
                ready.insert((std::cmp::Reverse(stamp), self.label_rank[i], NodeId::new(i)));
            }
        }
        let mut seq = Vec::with_capacity(n);
        while let Some(&entry) = ready.iter().next() {
            ready.remove(&entry);
            let v = entry.2;
            seq.push(v);
            stamp += 1;
            for &w in self.children(v) {
                indegree[w.index()] -= 1;
                if indegree[w.index()] == 0 {
                    ready.insert((std::cmp::Reverse(stamp), self.label_rank[w.index()], w));
                }
            }
        }
        debug_assert_eq!(seq.len(), n);
        ExecOrder::new_unchecked(seq)
    }

    /// Kahn's algorithm peeled in waves: each wave is the full set of
    /// currently ready nodes, emitted in ascending label order.
    fn topo_layered(&self) -> ExecOrder {
        let n = self.len();
        let mut indegree: Vec<usize> = (0..n).map(|i| self.parents[i].len()).collect();
        let mut wave: Vec<NodeId> = (0..n)
            .filter(|&i| indegree[i] == 0)
            .map(NodeId::new)
            .collect();
        let mut seq = Vec::with_capacity(n);
        while !wave.is_empty() {
            wave.sort_unstable_by_key(|&v| self.label_rank[v.index()]);
            let mut next = Vec::new();
            for &v in &wave {
                seq.push(v);
                for &w in self.children(v) {
                    indegree[w.index()] -= 1;
                    if indegree[w.index()] == 0 {
                        next.push(w);
                    }
                }
            }
            wave = next;
        }
        debug_assert_eq!(seq.len(), n);
        ExecOrder::new_unchecked(seq)
    }

    /// Execution-position interval during which a flagged `v` would occupy
    /// the catalog: its own slot through its last child's slot. A childless
    /// node holds only its own slot.
    pub fn hold_span(&self, order: &ExecOrder, v: NodeId) -> Result<(usize, usize), GraphError> {
        if v.index() >= self.len() {
            return Err(GraphError::UnknownNode(v.to_string()));
        }
        Ok(self.span_unchecked(order, v))
    }

    pub(crate) fn span_unchecked(&self, order: &ExecOrder, v: NodeId) -> (usize, usize) {
        let start = order.position(v);
        let end = self
            .children(v)
            .iter()
            .map(|&c| order.position(c))
            .max()
            .unwrap_or(start);
        (start, end)
    }

    /// Maximum concurrent flagged bytes over the run: the binding quantity
    /// of the memory-budget constraint. Linear in nodes + edges.
    pub fn peak_memory(&self, order: &ExecOrder, flags: &FlagSet) -> u64 {
        let n = self.len();
        if n == 0 {
            return 0;
        }
        // Difference array over 1-based positions.
        let mut delta = vec![0i128; n + 2];
        for v in flags.iter() {
            let (start, end) = self.span_unchecked(order, v);
            delta[start] += i128::from(self.size(v));
            delta[end + 1] -= i128::from(self.size(v));
        }
        let mut peak: i128 = 0;
        let mut cur: i128 = 0;
        for d in &delta[1..=n] {
            cur += d;
            peak = peak.max(cur);
        }
        peak as u64
    }

    /// Mean flagged byte·slots per position: for each flagged node, the
    /// gap between its slot and its last child's slot, weighted by size,
    /// averaged over all `n` positions. Childless flagged nodes contribute
    /// nothing.
    pub fn avg_memory_usage(&self, order: &ExecOrder, flags: &FlagSet) -> f64 {
        let n = self.len();
        if n == 0 {
            return 0.0;
        }
        let mut weighted: u128 = 0;
        for v in flags.iter() {
            let (start, end) = self.span_unchecked(order, v);
            weighted += (end - start) as u128 * u128::from(self.size(v));
        }
        weighted as f64 / n as f64
    }
}

/// Initial-order strategy for [`DepGraph::topo_order`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TopoStrategy {
    /// Single ready pool, smallest label first.
    Arbitrary,
    /// Ready nodes peeled in BFS waves, each wave label-sorted.
    BfsLayered,
    /// Branch-continuing DFS, label tie-break. The memory-aware orderer
    /// reduces to this when nothing is flagged, which makes it the
    /// natural starting point for alternating optimization.
    #[default]
    Dfs,
}

impl TopoStrategy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "arbitrary" => Some(TopoStrategy::Arbitrary),
            "bfs-layered" => Some(TopoStrategy::BfsLayered),
            "dfs" => Some(TopoStrategy::Dfs),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TopoStrategy::Arbitrary => "arbitrary",
            TopoStrategy::BfsLayered => "bfs-layered",
            TopoStrategy::Dfs => "dfs",
        }
    }
}

/// A topological execution order: bijection between nodes and 1-based
/// positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecOrder {
    seq: Vec<NodeId>,
    pos: Vec<u32>,
}

impl ExecOrder {
    pub(crate) fn new_unchecked(seq: Vec<NodeId>) -> Self {
        let mut pos = vec![0u32; seq.len()];
        for (i, v) in seq.iter().enumerate() {
            pos[v.index()] = (i + 1) as u32;
        }
        ExecOrder { seq, pos }
    }

    /// Validates an externally supplied sequence against the graph.
    pub fn new(g: &DepGraph, seq: Vec<NodeId>) -> Result<Self, OrderError> {
        if seq.len() != g.len() {
            return Err(OrderError::LengthMismatch { got: seq.len(), expected: g.len() });
        }
        let mut seen = vec![false; g.len()];
        for &v in &seq {
            if v.index() >= g.len() || seen[v.index()] {
                return Err(OrderError::NotPermutation(
                    v.index()
                        .checked_sub(0)
                        .filter(|&i| i < g.len())
                        .map(|i| g.label(NodeId::new(i)).to_string())
                        .unwrap_or_else(|| v.to_string()),
                ));
            }
            seen[v.index()] = true;
        }
        let order = ExecOrder::new_unchecked(seq);
        if let Some((u, v)) = order.first_violation(g) {
            return Err(OrderError::NotTopological {
                parent: g.label(u).to_string(),
                child: g.label(v).to_string(),
            });
        }
        Ok(order)
    }

    pub fn len(&self) -> usize {
        self.seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seq.is_empty()
    }

    /// 1-based position of `v`.
    pub fn position(&self, v: NodeId) -> usize {
        self.pos[v.index()] as usize
    }

    /// Node at 1-based position `p`.
    pub fn node_at(&self, p: usize) -> NodeId {
        self.seq[p - 1]
    }

    pub fn sequence(&self) -> &[NodeId] {
        &self.seq
    }

    pub fn is_topological(&self, g: &DepGraph) -> bool {
        self.first_violation(g).is_none()
    }

    fn first_violation(&self, g: &DepGraph) -> Option<(NodeId, NodeId)> {
        g.edges().find(|&(u, v)| self.position(u) >= self.position(v))
    }
}

/// Subset of nodes whose outputs are kept in the memory catalog.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlagSet(BTreeSet<NodeId>);

impl FlagSet {
    pub fn new() -> Self {
        FlagSet::default()
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.0.contains(&v)
    }

    pub fn insert(&mut self, v: NodeId) -> bool {
        self.0.insert(v)
    }

    pub fn remove(&mut self, v: NodeId) -> bool {
        self.0.remove(&v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Ascending by node index.
    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.0.iter().copied()
    }

    pub fn total_size(&self, g: &DepGraph) -> u64 {
        self.iter().map(|v| g.size(v)).sum()
    }

    pub fn total_score(&self, scores: &[f64]) -> f64 {
        self.iter().map(|v| scores[v.index()]).sum()
    }
}

impl FromIterator<NodeId> for FlagSet {
    fn from_iter<T: IntoIterator<Item = NodeId>>(iter: T) -> Self {
        FlagSet(iter.into_iter().collect())
    }
}

/// Joint output of the optimizer: an order, a flag set, and the two
/// summary quantities every consumer wants alongside them.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub order: ExecOrder,
    pub flagged: FlagSet,
    pub total_score: f64,
    pub peak_memory: u64,
}

impl Plan {
    pub fn new(g: &DepGraph, order: ExecOrder, flagged: FlagSet, scores: &[f64]) -> Self {
        let total_score = flagged.total_score(scores);
        let peak_memory = g.peak_memory(&order, &flagged);
        Plan { order, flagged, total_score, peak_memory }
    }
}
