//! Scaling policies: the CPU-only DS2 controller and the hybrid CPU/memory
//! policy layered on top of it.

mod ds2;
mod justin;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use ds2::{ds2_scale, should_trigger};
pub use justin::justin_scale;

use crate::error::{Error, Result};
use crate::metrics::{DecisionHistory, MetricWindow};
use crate::model::{Configuration, QueryGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyParams {
    pub busy_high: f64,
    pub busy_low: f64,
    /// Δθ: hit rates below this ask for more memory.
    pub delta_theta: f64,
    /// Δτ: access latencies (seconds per operation) above this ask for more memory.
    pub delta_tau: f64,
    pub max_level: u8,
    pub hysteresis: f64,
    pub justin_enabled: bool,
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams {
            busy_high: 0.8,
            busy_low: 0.2,
            delta_theta: 0.8,
            delta_tau: 1e-3,
            max_level: 3,
            hysteresis: 0.05,
            justin_enabled: true,
        }
    }
}

impl PolicyParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(0.0 < self.busy_low && self.busy_low < self.busy_high && self.busy_high <= 1.0) {
            return fail("need 0 < busy_low < busy_high <= 1");
        }
        if !(0.0 < self.delta_theta && self.delta_theta < 1.0) {
            return fail("delta_theta must lie in (0, 1)");
        }
        if !(self.delta_tau > 0.0 && self.delta_tau.is_finite()) {
            return fail("delta_tau must be positive");
        }
        if self.max_level < 1 {
            return fail("max_level must be at least 1");
        }
        if !(0.0..1.0).contains(&self.hysteresis) {
            return fail("hysteresis must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    None,
    Ds2,
    Justin,
}

impl Policy {
    /// The policy that actually runs: Justin without its switch is DS2.
    pub fn effective(self, params: &PolicyParams) -> Policy {
        match self {
            Policy::Justin if !params.justin_enabled => Policy::Ds2,
            p => p,
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::None => "none",
            Policy::Ds2 => "ds2",
            Policy::Justin => "justin",
        })
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Policy::None),
            "ds2" => Ok(Policy::Ds2),
            "justin" => Ok(Policy::Justin),
            _ => Err(Error::UnknownPolicy(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    NoChange,
    Reconfigure(Configuration),
}

/// Runs one control step. On a trigger, the window is recorded against
/// `config` before the proposal is computed. Proposals that keep every
/// operator's parallelism and memory level are reported as no change.
pub fn decide(
    policy: Policy,
    window: &MetricWindow,
    graph: &QueryGraph,
    config: &Configuration,
    history: &mut DecisionHistory,
    params: &PolicyParams,
) -> Result<Decision> {
    let policy = policy.effective(params);
    if policy == Policy::None || !should_trigger(window, graph, params) {
        return Ok(Decision::NoChange);
    }
    history.record(config, window.clone())?;
    let mut proposal = ds2_scale(window, graph, config, params)?;
    if policy == Policy::Justin {
        proposal = justin_scale(&proposal, config, history, window, params)?;
    }
    if proposal.same_resources(config) {
        Ok(Decision::NoChange)
    } else {
        Ok(Decision::Reconfigure(proposal))
    }
}
