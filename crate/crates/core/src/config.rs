//! Run configuration: a JSON document whose keys mirror the CLI flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::backend::BackendCalibration;
use crate::error::{Error, Result};
use crate::model::{Configuration, MemoryLevelScheme, QueryGraph, TaskManagerSpec};
use crate::policy::{Policy, PolicyParams};
use crate::sim::{RunOptions, Timing};
use crate::workload::{builtin, MicroKind, Scenario};

pub const OUTPUT_DIR_ENV: &str = "STREAMSCALE_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "out";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineScenario {
    pub label: String,
    pub graph: QueryGraph,
    #[serde(default)]
    pub initial_config: Option<Configuration>,
    #[serde(default)]
    pub tm_spec: TaskManagerSpec,
    #[serde(default)]
    pub scheme: MemoryLevelScheme,
    #[serde(default)]
    pub horizon_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Builtin(String),
    Inline(Box<InlineScenario>),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub kind: Option<MicroKind>,
    pub parallelism: Option<Vec<u32>>,
    pub memory_mb: Option<Vec<f64>>,
}

/// File-level configuration. Every field is optional; flags win over it.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Option<ScenarioRef>,
    pub target_rate: Option<f64>,
    pub horizon_s: Option<f64>,
    pub provisioning_limit: Option<usize>,
    pub calibration: Option<BackendCalibration>,
    pub policy: Option<Policy>,
    #[serde(default)]
    pub params: Option<PolicyParams>,
    pub timing: Option<Timing>,
    pub seed: Option<u64>,
    pub noise: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub sweep: Option<SweepConfig>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Builds the scenario this configuration refers to.
    pub fn scenario(&self) -> Result<Scenario> {
        let mut scenario = match &self.scenario {
            None => return Err(Error::Config("no scenario given".into())),
            Some(ScenarioRef::Builtin(name)) => builtin(name, self.target_rate)?,
            Some(ScenarioRef::Inline(inline)) => {
                let mut graph = inline.graph.clone();
                if let Some(rate) = self.target_rate {
                    graph.target_rate = rate;
                }
                let mut s = Scenario::from_graph(
                    inline.label.clone(),
                    graph,
                    inline.horizon_s.unwrap_or(crate::workload::NEXMARK_HORIZON_S),
                );
                if let Some(c) = &inline.initial_config {
                    s.initial_config = c.clone();
                }
                s.tm_spec = inline.tm_spec;
                s.scheme = inline.scheme;
                s
            }
        };
        if let Some(h) = self.horizon_s {
            scenario.horizon_s = h;
        }
        if let Some(cal) = self.calibration {
            scenario.calibration = cal;
        }
        if let Some(limit) = self.provisioning_limit {
            scenario.provisioning_limit = limit;
        }
        let params = self.params.unwrap_or_default();
        scenario.scheme.max_level = params.max_level;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            policy: self.policy.unwrap_or(Policy::Justin),
            params: self.params.unwrap_or_default(),
            timing: self.timing.unwrap_or_default(),
            seed: self.seed.unwrap_or(0),
            noise: self.noise.unwrap_or(0.0),
        }
    }

    /// Flag, then environment, then file, then `out`.
    pub fn output_dir(&self, env: Option<String>) -> PathBuf {
        env.filter(|s| !s.is_empty())
            .map(PathBuf::from)
            .or_else(|| self.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }
}
