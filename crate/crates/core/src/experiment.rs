//! Multi-run experiments: policy comparisons and microbenchmark grids.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::sim::{run, RunOptions, RunOutcome};
use crate::workload::{microbenchmark, MicroKind, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRecord {
    pub label: String,
    pub ds2_cores: u32,
    pub justin_cores: u32,
    pub cores_ratio: f64,
    pub ds2_memory_mb: f64,
    pub justin_memory_mb: f64,
    pub memory_ratio: f64,
    pub ds2_steps: usize,
    pub justin_steps: usize,
    pub ds2_convergence_s: f64,
    pub justin_convergence_s: f64,
    pub ds2_achieved_rate: f64,
    pub justin_achieved_rate: f64,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub ds2: RunOutcome,
    pub justin: RunOutcome,
    pub record: ComparisonRecord,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        f64::NAN
    } else {
        a / b
    }
}

/// Runs the scenario under DS2 and Justin with the same seed and parameters.
pub fn compare(scenario: &Scenario, opts: &RunOptions) -> Result<Comparison> {
    let with = |policy| RunOptions {
        policy,
        ..opts.clone()
    };
    let (ds2, justin) = rayon::join(
        || run(scenario, &with(Policy::Ds2)),
        || run(scenario, &with(Policy::Justin)),
    );
    let (ds2, justin) = (ds2?, justin?);
    let (d, j) = (&ds2.summary, &justin.summary);
    let record = ComparisonRecord {
        label: scenario.label.clone(),
        ds2_cores: d.final_cores,
        justin_cores: j.final_cores,
        cores_ratio: ratio(f64::from(j.final_cores), f64::from(d.final_cores)),
        ds2_memory_mb: d.final_memory_mb,
        justin_memory_mb: j.final_memory_mb,
        memory_ratio: ratio(j.final_memory_mb, d.final_memory_mb),
        ds2_steps: d.reconfigurations,
        justin_steps: j.reconfigurations,
        ds2_convergence_s: d.convergence_time_s,
        justin_convergence_s: j.convergence_time_s,
        ds2_achieved_rate: d.achieved_rate,
        justin_achieved_rate: j.achieved_rate,
    };
    Ok(Comparison { ds2, justin, record })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub kind: MicroKind,
    pub p: u32,
    pub memory_mb: f64,
    pub achieved_rate: f64,
    pub target_rate: f64,
}

/// Runs every `(parallelism, memory)` pair of a microbenchmark with the
/// configuration pinned. Rows follow the order of the inputs.
pub fn sweep(
    kind: MicroKind,
    parallelisms: &[u32],
    memories_mb: &[f64],
    opts: &RunOptions,
) -> Result<Vec<SweepRow>> {
    if parallelisms.is_empty() || memories_mb.is_empty() {
        return Err(Error::InvalidParameter("sweep needs parallelism and memory values".into()));
    }
    let grid: Vec<(u32, f64)> = parallelisms
        .iter()
        .flat_map(|&p| memories_mb.iter().map(move |&m| (p, m)))
        .collect();
    grid.par_iter()
        .map(|&(p, m)| {
            let scenario = microbenchmark(kind, p, m)?;
            let out = run(&scenario, opts)?;
            Ok(SweepRow {
                kind,
                p,
                memory_mb: m,
                achieved_rate: out.summary.achieved_rate,
                target_rate: out.summary.target_rate,
            })
        })
        .collect()
}
