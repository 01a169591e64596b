//! Domain types shared by every other module: operators, query graphs,
//! configurations, memory levels and task manager sizing.

use std::collections::BTreeMap;
use std::fmt;

use petgraph::algo::toposort;
use petgraph::graph::{DiGraph, NodeIndex};
use petgraph::visit::Bfs;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type OperatorId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Source,
    Sink,
    Stateless,
    Stateful,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub id: OperatorId,
    pub kind: OperatorKind,
    /// Seconds of CPU per processed event.
    #[serde(default)]
    pub cpu_cost_per_event: f64,
    /// Output events per input event.
    #[serde(default = "one")]
    pub selectivity: f64,
    #[serde(default)]
    pub reads_per_event: f64,
    #[serde(default)]
    pub writes_per_event: f64,
    /// State working set over all keys, in bytes.
    #[serde(default)]
    pub total_state_bytes: f64,
}

fn one() -> f64 {
    1.0
}

impl OperatorSpec {
    pub fn source(id: impl Into<OperatorId>) -> Self {
        OperatorSpec {
            id: id.into(),
            kind: OperatorKind::Source,
            cpu_cost_per_event: 0.0,
            selectivity: 1.0,
            reads_per_event: 0.0,
            writes_per_event: 0.0,
            total_state_bytes: 0.0,
        }
    }

    pub fn sink(id: impl Into<OperatorId>, cpu_cost_per_event: f64) -> Self {
        OperatorSpec {
            id: id.into(),
            kind: OperatorKind::Sink,
            cpu_cost_per_event,
            selectivity: 0.0,
            reads_per_event: 0.0,
            writes_per_event: 0.0,
            total_state_bytes: 0.0,
        }
    }

    pub fn stateless(id: impl Into<OperatorId>, cpu_cost_per_event: f64, selectivity: f64) -> Self {
        OperatorSpec {
            id: id.into(),
            kind: OperatorKind::Stateless,
            cpu_cost_per_event,
            selectivity,
            reads_per_event: 0.0,
            writes_per_event: 0.0,
            total_state_bytes: 0.0,
        }
    }

    pub fn stateful(
        id: impl Into<OperatorId>,
        cpu_cost_per_event: f64,
        selectivity: f64,
        reads_per_event: f64,
        writes_per_event: f64,
        total_state_bytes: f64,
    ) -> Self {
        OperatorSpec {
            id: id.into(),
            kind: OperatorKind::Stateful,
            cpu_cost_per_event,
            selectivity,
            reads_per_event,
            writes_per_event,
            total_state_bytes,
        }
    }

    pub fn is_stateful(&self) -> bool {
        self.kind == OperatorKind::Stateful
    }

    /// Invariant violations of this operator alone.
    fn issues(&self) -> Vec<GraphIssue> {
        let mut issues = Vec::new();
        let bad = |reason: &str| GraphIssue::InvalidOperator {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        let non_negative = [
            self.cpu_cost_per_event,
            self.selectivity,
            self.reads_per_event,
            self.writes_per_event,
            self.total_state_bytes,
        ];
        if non_negative.iter().any(|v| !v.is_finite() || *v < 0.0) {
            issues.push(bad("costs, selectivity and state must be finite and non-negative"));
        }
        match self.kind {
            OperatorKind::Stateful => {
                if self.reads_per_event + self.writes_per_event <= 0.0 {
                    issues.push(bad("stateful operator must read or write state"));
                }
            }
            _ => {
                if self.reads_per_event != 0.0
                    || self.writes_per_event != 0.0
                    || self.total_state_bytes != 0.0
                {
                    issues.push(bad("only stateful operators access state"));
                }
            }
        }
        if self.kind == OperatorKind::Sink && self.selectivity != 0.0 {
            issues.push(bad("sink selectivity must be 0"));
        }
        if self.kind != OperatorKind::Source && self.cpu_cost_per_event <= 0.0 {
            issues.push(bad("processing operators need a positive CPU cost"));
        }
        issues
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphIssue {
    Cycle,
    NoSource,
    DuplicateOperator(OperatorId),
    UnknownEndpoint(OperatorId),
    Orphan(OperatorId),
    SourceWithIncomingEdge(OperatorId),
    SinkWithOutgoingEdge(OperatorId),
    InvalidOperator { id: OperatorId, reason: String },
}

impl fmt::Display for GraphIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphIssue::Cycle => write!(f, "graph contains a cycle"),
            GraphIssue::NoSource => write!(f, "graph has no source"),
            GraphIssue::DuplicateOperator(id) => write!(f, "operator `{id}` declared twice"),
            GraphIssue::UnknownEndpoint(id) => write!(f, "edge references unknown operator `{id}`"),
            GraphIssue::Orphan(id) => write!(f, "operator `{id}` is unreachable from any source"),
            GraphIssue::SourceWithIncomingEdge(id) => write!(f, "source `{id}` has an incoming edge"),
            GraphIssue::SinkWithOutgoingEdge(id) => write!(f, "sink `{id}` has an outgoing edge"),
            GraphIssue::InvalidOperator { id, reason } => write!(f, "operator `{id}`: {reason}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryGraph {
    pub operators: Vec<OperatorSpec>,
    /// `(upstream, downstream)` pairs.
    pub edges: Vec<(OperatorId, OperatorId)>,
    /// Events per second injected by each source.
    pub target_rate: f64,
}

impl QueryGraph {
    /// Builds a linear pipeline, connecting operators in the given order.
    pub fn chain(operators: Vec<OperatorSpec>, target_rate: f64) -> Self {
        let edges = operators
            .windows(2)
            .map(|w| (w[0].id.clone(), w[1].id.clone()))
            .collect();
        QueryGraph {
            operators,
            edges,
            target_rate,
        }
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.operators.iter().position(|op| op.id == id)
    }

    pub fn operator(&self, id: &str) -> Option<&OperatorSpec> {
        self.operators.iter().find(|op| op.id == id)
    }

    pub fn sources(&self) -> impl Iterator<Item = &OperatorSpec> {
        self.operators
            .iter()
            .filter(|op| op.kind == OperatorKind::Source)
    }

    pub fn upstream<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges
            .iter()
            .filter(move |(_, to)| to == id)
            .map(|(from, _)| from.as_str())
    }

    pub fn downstream<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges
            .iter()
            .filter(move |(from, _)| from == id)
            .map(|(_, to)| to.as_str())
    }

    fn digraph(&self) -> (DiGraph<usize, ()>, Vec<NodeIndex>, Vec<GraphIssue>) {
        let mut g = DiGraph::new();
        let nodes: Vec<_> = (0..self.operators.len()).map(|i| g.add_node(i)).collect();
        let mut issues = Vec::new();
        for (from, to) in &self.edges {
            match (self.index_of(from), self.index_of(to)) {
                (Some(a), Some(b)) => {
                    g.add_edge(nodes[a], nodes[b], ());
                }
                (a, b) => {
                    if a.is_none() {
                        issues.push(GraphIssue::UnknownEndpoint(from.clone()));
                    }
                    if b.is_none() {
                        issues.push(GraphIssue::UnknownEndpoint(to.clone()));
                    }
                }
            }
        }
        (g, nodes, issues)
    }

    /// Operator indices in topological order.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let (g, _, issues) = self.digraph();
        if !issues.is_empty() {
            return Err(Error::InvalidGraph(issues));
        }
        toposort(&g, None)
            .map(|order| order.into_iter().map(|n| g[n]).collect())
            .map_err(|_| Error::InvalidGraph(vec![GraphIssue::Cycle]))
    }
}

/// Checks every graph invariant and reports all violations at once.
pub fn validate_graph(graph: &QueryGraph) -> std::result::Result<(), Vec<GraphIssue>> {
    let (g, nodes, mut issues) = graph.digraph();

    let mut seen = std::collections::HashSet::new();
    for op in &graph.operators {
        if !seen.insert(op.id.as_str()) {
            issues.push(GraphIssue::DuplicateOperator(op.id.clone()));
        }
        issues.extend(op.issues());
    }

    if toposort(&g, None).is_err() {
        issues.push(GraphIssue::Cycle);
    }

    let sources: Vec<usize> = graph
        .operators
        .iter()
        .enumerate()
        .filter(|(_, op)| op.kind == OperatorKind::Source)
        .map(|(i, _)| i)
        .collect();
    if sources.is_empty() {
        issues.push(GraphIssue::NoSource);
    }

    let mut reached = vec![false; graph.operators.len()];
    for &s in &sources {
        let mut bfs = Bfs::new(&g, nodes[s]);
        while let Some(n) = bfs.next(&g) {
            reached[g[n]] = true;
        }
    }
    for (i, op) in graph.operators.iter().enumerate() {
        if !reached[i] {
            issues.push(GraphIssue::Orphan(op.id.clone()));
        }
    }

    for (from, to) in &graph.edges {
        if let Some(op) = graph.operator(to) {
            if op.kind == OperatorKind::Source {
                issues.push(GraphIssue::SourceWithIncomingEdge(to.clone()));
            }
        }
        if let Some(op) = graph.operator(from) {
            if op.kind == OperatorKind::Sink {
                issues.push(GraphIssue::SinkWithOutgoingEdge(from.clone()));
            }
        }
    }

    if !(graph.target_rate.is_finite() && graph.target_rate >= 0.0) {
        issues.push(GraphIssue::InvalidOperator {
            id: "<graph>".into(),
            reason: "target rate must be finite and non-negative".into(),
        });
    }

    issues.dedup();
    if issues.is_empty() {
        Ok(())
    } else {
        Err(issues)
    }
}

/// Per-task managed memory tier; `None` means no managed memory at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum MemoryLevel {
    #[default]
    None,
    Level(u8),
}

impl MemoryLevel {
    pub fn level(self) -> Option<u8> {
        match self {
            MemoryLevel::None => None,
            MemoryLevel::Level(l) => Some(l),
        }
    }

    pub fn is_none(self) -> bool {
        self == MemoryLevel::None
    }
}

impl fmt::Display for MemoryLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemoryLevel::None => f.write_str("none"),
            MemoryLevel::Level(l) => write!(f, "{l}"),
        }
    }
}

impl Serialize for MemoryLevel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MemoryLevel::None => s.serialize_str("none"),
            MemoryLevel::Level(l) => s.serialize_u8(*l),
        }
    }
}

impl<'de> Deserialize<'de> for MemoryLevel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u8),
            Text(String),
            Null(()),
        }
        match Raw::deserialize(d)? {
            Raw::Num(l) => Ok(MemoryLevel::Level(l)),
            Raw::Null(()) => Ok(MemoryLevel::None),
            Raw::Text(t) if t == "none" => Ok(MemoryLevel::None),
            Raw::Text(t) => t
                .parse()
                .map(MemoryLevel::Level)
                .map_err(|_| serde::de::Error::custom(format!("invalid memory level `{t}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorConfig {
    pub parallelism: u32,
    pub level: MemoryLevel,
    /// Set when this configuration scaled the operator's memory up.
    #[serde(default)]
    pub scaled_up: bool,
}

impl OperatorConfig {
    pub fn new(parallelism: u32, level: MemoryLevel) -> Self {
        OperatorConfig {
            parallelism,
            level,
            scaled_up: false,
        }
    }

    /// Same parallelism and memory level, ignoring the scale-up flag.
    pub fn same_resources(&self, other: &OperatorConfig) -> bool {
        self.parallelism == other.parallelism && self.level == other.level
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Configuration {
    pub entries: BTreeMap<OperatorId, OperatorConfig>,
    pub timestamp: u64,
}

impl Configuration {
    /// Sources start without managed memory, every other operator at level 0.
    pub fn initial(graph: &QueryGraph) -> Self {
        let entries = graph
            .operators
            .iter()
            .map(|op| {
                let level = if op.kind == OperatorKind::Source {
                    MemoryLevel::None
                } else {
                    MemoryLevel::Level(0)
                };
                (op.id.clone(), OperatorConfig::new(1, level))
            })
            .collect();
        Configuration {
            entries,
            timestamp: 0,
        }
    }

    pub fn get(&self, id: &str) -> Option<&OperatorConfig> {
        self.entries.get(id)
    }

    pub fn entry(&self, id: &str) -> Result<&OperatorConfig> {
        self.entries
            .get(id)
            .ok_or_else(|| Error::UnknownOperator(id.to_string()))
    }

    /// True when parallelism and memory level match for every operator.
    pub fn same_resources(&self, other: &Configuration) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().all(|(id, c)| {
                other
                    .entries
                    .get(id)
                    .is_some_and(|o| c.same_resources(o))
            })
    }

    /// Checks coverage of `graph` and the per-entry invariants.
    pub fn validate_for(&self, graph: &QueryGraph, scheme: &MemoryLevelScheme) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.entries.len() != graph.operators.len() {
            return bad("configuration does not cover the graph's operators".into());
        }
        for op in &graph.operators {
            let c = self.entry(&op.id)?;
            if c.parallelism == 0 {
                return bad(format!("operator `{}` has parallelism 0", op.id));
            }
            if let MemoryLevel::Level(l) = c.level {
                if l > scheme.max_level {
                    return Err(Error::InvalidLevel {
                        level: l,
                        max_level: scheme.max_level,
                    });
                }
            } else if op.is_stateful() {
                return Err(Error::MissingMemoryLevel(op.id.clone()));
            }
            if c.scaled_up && c.level.is_none() {
                return bad(format!("operator `{}` scaled up without memory", op.id));
            }
        }
        Ok(())
    }

    /// Compact `id:p/level` listing used in summaries.
    pub fn describe(&self) -> String {
        self.entries
            .iter()
            .map(|(id, c)| format!("{id}:{}/{}", c.parallelism, c.level))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskManagerSpec {
    pub cores: u32,
    pub total_memory_mb: f64,
    pub slots: u32,
    pub managed_memory_budget_mb: f64,
}

impl Default for TaskManagerSpec {
    /// 4 cores and 2 GB shared by 4 slots of 158 MB managed memory each.
    fn default() -> Self {
        TaskManagerSpec {
            cores: 4,
            total_memory_mb: 2048.0,
            slots: 4,
            managed_memory_budget_mb: 632.0,
        }
    }
}

impl TaskManagerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.slots == 0 || self.slots > self.cores {
            return Err(Error::InvalidParameter(
                "task manager needs 1..=cores slots".into(),
            ));
        }
        if !(self.managed_memory_budget_mb >= 0.0
            && self.managed_memory_budget_mb <= self.total_memory_mb)
        {
            return Err(Error::InvalidParameter(
                "managed memory budget must lie within total memory".into(),
            ));
        }
        Ok(())
    }

    /// Heap, network and framework memory charged to every occupied slot.
    pub fn non_managed_per_slot_mb(&self) -> f64 {
        (self.total_memory_mb - self.managed_memory_budget_mb) / f64::from(self.slots)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryLevelScheme {
    /// Managed memory per task at level 0.
    pub base_mb: f64,
    pub max_level: u8,
}

impl Default for MemoryLevelScheme {
    fn default() -> Self {
        MemoryLevelScheme {
            base_mb: 158.0,
            max_level: 3,
        }
    }
}

impl MemoryLevelScheme {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_mb > 0.0) || self.max_level < 1 {
            return Err(Error::InvalidParameter(
                "memory scheme needs base_mb > 0 and max_level >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Per-task managed memory: zero without a level, `base * 2^level` otherwise.
    pub fn memory_for_level(&self, level: MemoryLevel) -> Result<f64> {
        match level {
            MemoryLevel::None => Ok(0.0),
            MemoryLevel::Level(l) if l > self.max_level => Err(Error::InvalidLevel {
                level: l,
                max_level: self.max_level,
            }),
            MemoryLevel::Level(l) => Ok(self.base_mb * f64::from(1u32 << l)),
        }
    }
}

pub fn memory_for_level(scheme: &MemoryLevelScheme, level: MemoryLevel) -> Result<f64> {
    scheme.memory_for_level(level)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ResourceTotals {
    pub cores: u32,
    pub memory_mb: f64,
}

impl std::ops::Add for ResourceTotals {
    type Output = ResourceTotals;

    fn add(self, rhs: Self) -> Self {
        ResourceTotals {
            cores: self.cores + rhs.cores,
            memory_mb: self.memory_mb + rhs.memory_mb,
        }
    }
}

/// Cores and memory held by a configuration. Sources are not counted; every
/// other task holds one core plus its slot's non-managed share and its
/// managed memory.
pub fn total_resources(
    config: &Configuration,
    graph: &QueryGraph,
    scheme: &MemoryLevelScheme,
    tm: &TaskManagerSpec,
) -> Result<ResourceTotals> {
    let per_slot = tm.non_managed_per_slot_mb();
    let mut totals = ResourceTotals::default();
    for (id, c) in &config.entries {
        let op = graph
            .operator(id)
            .ok_or_else(|| Error::UnknownOperator(id.clone()))?;
        if op.kind == OperatorKind::Source {
            continue;
        }
        let managed = scheme.memory_for_level(c.level)?;
        totals.cores += c.parallelism;
        totals.memory_mb += f64::from(c.parallelism) * (per_slot + managed);
    }
    Ok(totals)
}
