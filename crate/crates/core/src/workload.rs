//! Built-in scenarios: the state-backend microbenchmarks and Nexmark-shaped
//! query topologies.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendCalibration, MIB};
use crate::error::{Error, Result};
use crate::model::{
    validate_graph, Configuration, MemoryLevel, MemoryLevelScheme, OperatorSpec, QueryGraph,
    TaskManagerSpec,
};

pub const DEFAULT_PROVISIONING_LIMIT: usize = 16;

/// CPU cost per event of the microbenchmark operator.
pub const MICRO_CPU_COST: f64 = 20e-6;
pub const MICRO_KEYS: f64 = 1_000_001.0;
pub const MICRO_EVENT_BYTES: f64 = 1_000.0;
pub const MICRO_MEMORY_MB: [f64; 5] = [128.0, 256.0, 512.0, 1024.0, 2048.0];
pub const MICRO_HORIZON_S: f64 = 60.0;
pub const NEXMARK_HORIZON_S: f64 = 240.0;

const SINK_CPU_COST: f64 = 0.1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub label: String,
    pub graph: QueryGraph,
    pub initial_config: Configuration,
    #[serde(default)]
    pub tm_spec: TaskManagerSpec,
    #[serde(default)]
    pub scheme: MemoryLevelScheme,
    #[serde(default)]
    pub calibration: BackendCalibration,
    pub horizon_s: f64,
    #[serde(default = "default_limit")]
    pub provisioning_limit: usize,
    /// When false the configuration is pinned and every policy acts as `none`.
    #[serde(default = "yes")]
    pub autoscaling: bool,
}

fn default_limit() -> usize {
    DEFAULT_PROVISIONING_LIMIT
}

fn yes() -> bool {
    true
}

impl Scenario {
    /// Wraps a graph with default cluster sizing and the level-0 initial configuration.
    pub fn from_graph(label: impl Into<String>, graph: QueryGraph, horizon_s: f64) -> Self {
        let initial_config = Configuration::initial(&graph);
        Scenario {
            label: label.into(),
            graph,
            initial_config,
            tm_spec: TaskManagerSpec::default(),
            scheme: MemoryLevelScheme::default(),
            calibration: BackendCalibration::default(),
            horizon_s,
            provisioning_limit: DEFAULT_PROVISIONING_LIMIT,
            autoscaling: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_graph(&self.graph).map_err(Error::InvalidGraph)?;
        self.tm_spec.validate()?;
        self.scheme.validate()?;
        self.calibration.validate()?;
        self.initial_config.validate_for(&self.graph, &self.scheme)?;
        if !(self.horizon_s > 0.0 && self.horizon_s.is_finite()) {
            return Err(Error::InvalidParameter("horizon must be positive".into()));
        }
        if self.provisioning_limit == 0 {
            return Err(Error::InvalidParameter("provisioning limit must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MicroKind {
    Read,
    Write,
    Update,
}

impl MicroKind {
    pub fn accesses(self) -> (f64, f64) {
        match self {
            MicroKind::Read => (1.0, 0.0),
            MicroKind::Write => (0.0, 1.0),
            MicroKind::Update => (1.0, 1.0),
        }
    }

    pub fn target_rate(self) -> f64 {
        match self {
            MicroKind::Read | MicroKind::Write => 50_000.0,
            MicroKind::Update => 30_000.0,
        }
    }
}

impl fmt::Display for MicroKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MicroKind::Read => "read",
            MicroKind::Write => "write",
            MicroKind::Update => "update",
        })
    }
}

impl FromStr for MicroKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "read" => Ok(MicroKind::Read),
            "write" => Ok(MicroKind::Write),
            "update" => Ok(MicroKind::Update),
            _ => Err(Error::UnknownKind(s.to_string())),
        }
    }
}

/// One stateful operator over a million 1 KB keys, pinned at `(parallelism, memory_mb)`.
///
/// The level-0 memory of the scheme is `memory_mb`, and task managers are
/// sized so four such tasks fit, keeping the per-slot non-managed share of
/// the default task manager.
pub fn microbenchmark(kind: MicroKind, parallelism: u32, memory_mb: f64) -> Result<Scenario> {
    if !(1..=8).contains(&parallelism) {
        return Err(Error::InvalidParameter(format!(
            "microbenchmark parallelism {parallelism} outside 1..=8"
        )));
    }
    if !MICRO_MEMORY_MB.contains(&memory_mb) {
        return Err(Error::InvalidParameter(format!(
            "microbenchmark memory {memory_mb} MB not one of 128, 256, 512, 1024, 2048"
        )));
    }
    let (reads, writes) = kind.accesses();
    let graph = QueryGraph::chain(
        vec![
            OperatorSpec::source("source"),
            OperatorSpec::stateful(
                kind.to_string(),
                MICRO_CPU_COST,
                1.0,
                reads,
                writes,
                MICRO_KEYS * MICRO_EVENT_BYTES,
            ),
            OperatorSpec::sink("sink", SINK_CPU_COST),
        ],
        kind.target_rate(),
    );
    let mut scenario = Scenario::from_graph(
        format!("micro_{kind}_p{parallelism}_m{memory_mb}"),
        graph,
        MICRO_HORIZON_S,
    );
    let default_tm = TaskManagerSpec::default();
    let slots = f64::from(default_tm.slots);
    scenario.scheme.base_mb = memory_mb;
    scenario.tm_spec.managed_memory_budget_mb = slots * memory_mb;
    scenario.tm_spec.total_memory_mb = slots * (memory_mb + default_tm.non_managed_per_slot_mb());
    let entries = &mut scenario.initial_config.entries;
    entries.get_mut(&kind.to_string()).unwrap().parallelism = parallelism;
    entries.get_mut("sink").unwrap().level = MemoryLevel::None;
    scenario.autoscaling = false;
    Ok(scenario)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NexmarkQuery {
    Q1,
    Q2,
    Q3,
    Q5,
    Q8,
    Q11,
}

impl NexmarkQuery {
    pub const ALL: [NexmarkQuery; 6] = [
        NexmarkQuery::Q1,
        NexmarkQuery::Q2,
        NexmarkQuery::Q3,
        NexmarkQuery::Q5,
        NexmarkQuery::Q8,
        NexmarkQuery::Q11,
    ];

    pub fn default_target_rate(self) -> f64 {
        match self {
            NexmarkQuery::Q1 | NexmarkQuery::Q2 => 2_250_000.0,
            NexmarkQuery::Q3 => 1_000_000.0,
            NexmarkQuery::Q5 => 95_000.0,
            NexmarkQuery::Q8 => 4_000.0,
            NexmarkQuery::Q11 => 10_000.0,
        }
    }
}

impl fmt::Display for NexmarkQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NexmarkQuery::Q1 => "q1",
            NexmarkQuery::Q2 => "q2",
            NexmarkQuery::Q3 => "q3",
            NexmarkQuery::Q5 => "q5",
            NexmarkQuery::Q8 => "q8",
            NexmarkQuery::Q11 => "q11",
        })
    }
}

impl FromStr for NexmarkQuery {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NexmarkQuery::ALL
            .into_iter()
            .find(|q| q.to_string() == s)
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

pub fn nexmark_like(query: NexmarkQuery, target_rate: f64) -> Result<Scenario> {
    if !(target_rate > 0.0 && target_rate.is_finite()) {
        return Err(Error::InvalidParameter("target rate must be positive".into()));
    }
    let source = OperatorSpec::source("source");
    let sink = OperatorSpec::sink("sink", SINK_CPU_COST);
    let graph = match query {
        NexmarkQuery::Q1 => QueryGraph::chain(
            vec![source, OperatorSpec::stateless("map", 2.3e-6, 1.0), sink],
            target_rate,
        ),
        NexmarkQuery::Q2 => QueryGraph::chain(
            vec![source, OperatorSpec::stateless("filter", 2.3e-6, 0.05), sink],
            target_rate,
        ),
        NexmarkQuery::Q3 => QueryGraph {
            operators: vec![
                source,
                OperatorSpec::stateless("filter_persons", 0.5e-6, 0.01),
                OperatorSpec::stateless("filter_auctions", 0.5e-6, 0.02),
                OperatorSpec::stateful("join", 190e-6, 1.0, 1.0, 1.0, 8.0 * MIB),
                sink,
            ],
            edges: [
                ("source", "filter_persons"),
                ("source", "filter_auctions"),
                ("filter_persons", "join"),
                ("filter_auctions", "join"),
                ("join", "sink"),
            ]
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect(),
            target_rate,
        },
        NexmarkQuery::Q5 => QueryGraph::chain(
            vec![
                source,
                OperatorSpec::stateful("window_agg", 40e-6, 0.01, 2.0, 1.0, 10.0 * MIB),
                sink,
            ],
            target_rate,
        ),
        NexmarkQuery::Q8 => QueryGraph::chain(
            vec![
                source,
                OperatorSpec::stateful("window_join", 20e-6, 1.0, 2.0, 1.0, 300.0 * MIB),
                sink,
            ],
            target_rate,
        ),
        NexmarkQuery::Q11 => QueryGraph::chain(
            vec![
                source,
                OperatorSpec::stateful("session_agg", 20e-6, 1.0, 1.0, 1.0, 250.0 * MIB),
                sink,
            ],
            target_rate,
        ),
    };
    Ok(Scenario::from_graph(query.to_string(), graph, NEXMARK_HORIZON_S))
}

/// Resolves a built-in scenario name: `q1`..`q11`, or `micro:<kind>:<p>:<memory_mb>`.
pub fn builtin(name: &str, target_rate: Option<f64>) -> Result<Scenario> {
    if let Some(rest) = name.strip_prefix("micro:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let [kind, p, mem] = parts.as_slice() else {
            return Err(Error::UnknownScenario(name.to_string()));
        };
        let kind: MicroKind = kind.parse()?;
        let p: u32 = p.parse().map_err(|_| Error::UnknownScenario(name.to_string()))?;
        let mem: f64 = mem.parse().map_err(|_| Error::UnknownScenario(name.to_string()))?;
        let mut s = microbenchmark(kind, p, mem)?;
        if let Some(rate) = target_rate {
            s.graph.target_rate = rate;
        }
        return Ok(s);
    }
    let query: NexmarkQuery = name.parse()?;
    nexmark_like(query, target_rate.unwrap_or_else(|| query.default_target_rate()))
}
