//! Closed-loop, fluid-rate simulation of a query under a scaling policy.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{evaluate_operator, OperatorModel};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, DecisionHistory};
use crate::model::{total_resources, Configuration, OperatorKind, ResourceTotals};
use crate::placement::{demands_for, pack, ClusterState};
use crate::policy::{decide, Decision, Policy, PolicyParams};
use crate::trace::TracePoint;
use crate::workload::Scenario;

/// Tolerance for deciding which operator binds the throttle.
const BINDING_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Timing {
    pub dt_s: f64,
    pub window_s: f64,
    pub stabilization_s: f64,
    pub pause_s: f64,
}

impl Default for Timing {
    fn default() -> Self {
        Timing::desk()
    }
}

impl Timing {
    /// 5 s sampling, 2 min windows, 1 min stabilization, 10 s pause.
    pub fn full() -> Self {
        Timing {
            dt_s: 5.0,
            window_s: 120.0,
            stabilization_s: 60.0,
            pause_s: 10.0,
        }
    }

    /// Every duration of [`Timing::full`] shrunk ten times.
    pub fn desk() -> Self {
        Timing {
            dt_s: 0.5,
            window_s: 12.0,
            stabilization_s: 6.0,
            pause_s: 1.0,
        }
    }

    /// Whole number of steps in `secs`; durations must be multiples of `dt`.
    pub fn ticks(&self, secs: f64) -> Result<u64> {
        let t = secs / self.dt_s;
        let r = t.round();
        if !(r >= 0.0) || (t - r).abs() > 1e-6 || !r.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "duration {secs} s is not a multiple of dt {} s",
                self.dt_s
            )));
        }
        Ok(r as u64)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_s > 0.0 && self.dt_s.is_finite()) {
            return Err(Error::InvalidParameter("dt must be positive".into()));
        }
        if self.ticks(self.window_s)? == 0 {
            return Err(Error::InvalidParameter("window must span at least one step".into()));
        }
        self.ticks(self.stabilization_s)?;
        self.ticks(self.pause_s)?;
        Ok(())
    }
}

/// Instantaneous state of one operator.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct OperatorRates {
    pub offered: f64,
    pub processed: f64,
    pub output: f64,
    pub busyness: f64,
    pub hit_rate: Option<f64>,
    pub access_latency: Option<f64>,
    pub backpressured: bool,
}

/// Rates of a single operator from its offered load and aggregate capacity.
pub fn operator_rates(offered: f64, capacity: f64) -> (f64, f64, bool) {
    let processed = offered.min(capacity);
    let busyness = if capacity > 0.0 && capacity.is_finite() {
        processed / capacity
    } else {
        0.0
    };
    (processed, busyness, offered > capacity)
}

/// Steady-state rates of every operator (indexed like `graph.operators`).
///
/// Demand flows from the sources at the target rate. If any operator's
/// capacity is below its demand, all sources are throttled by the smallest
/// capacity/demand ratio, so the binding operator runs at busyness 1 and
/// every operator upstream of it reports backpressure.
pub fn saturate(scenario: &Scenario, config: &Configuration) -> Result<Vec<OperatorRates>> {
    let graph = &scenario.graph;
    let n = graph.operators.len();
    let order = graph.topological_order()?;
    let mut demand = vec![0.0; n];
    let mut demand_out = vec![0.0; n];
    let mut models: Vec<Option<OperatorModel>> = vec![None; n];
    let mut capacity = vec![f64::INFINITY; n];

    for &i in &order {
        let op = &graph.operators[i];
        if op.kind == OperatorKind::Source {
            demand[i] = graph.target_rate;
            demand_out[i] = graph.target_rate;
            continue;
        }
        demand[i] = graph
            .upstream(&op.id)
            .map(|u| demand_out[graph.index_of(u).expect("validated edge")])
            .sum();
        demand_out[i] = demand[i] * op.selectivity;
        let c = config.entry(&op.id)?;
        let model = evaluate_operator(op, c.parallelism, c.level, &scenario.scheme, &scenario.calibration)?;
        capacity[i] = f64::from(c.parallelism) * model.capacity();
        models[i] = Some(model);
    }

    let throttle = (0..n)
        .filter(|&i| demand[i] > 0.0)
        .map(|i| capacity[i] / demand[i])
        .fold(1.0_f64, f64::min);
    let binding: Vec<usize> = (0..n)
        .filter(|&i| demand[i] > 0.0 && capacity[i] / demand[i] <= throttle * (1.0 + BINDING_EPS))
        .filter(|_| throttle < 1.0)
        .collect();

    let mut rates: Vec<OperatorRates> = (0..n)
        .map(|i| {
            let processed = demand[i] * throttle;
            let busyness = if capacity[i].is_finite() && capacity[i] > 0.0 {
                (processed / capacity[i]).min(1.0)
            } else {
                0.0
            };
            OperatorRates {
                offered: processed,
                processed,
                output: demand_out[i] * throttle,
                busyness,
                hit_rate: models[i].and_then(|m| m.hit_rate),
                access_latency: models[i].and_then(|m| m.access_latency),
                backpressured: false,
            }
        })
        .collect();
    for (i, op) in graph.operators.iter().enumerate() {
        if op.kind == OperatorKind::Source {
            rates[i].offered = graph.target_rate;
        }
    }

    let mut queue: VecDeque<usize> = VecDeque::new();
    for &b in &binding {
        rates[b].busyness = 1.0;
        queue.push_back(b);
    }
    while let Some(i) = queue.pop_front() {
        for u in graph.upstream(&graph.operators[i].id) {
            let u = graph.index_of(u).expect("validated edge");
            if !rates[u].backpressured {
                rates[u].backpressured = true;
                queue.push_back(u);
            }
        }
    }
    Ok(rates)
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub tick: u64,
    pub dt_s: f64,
    pub config: Configuration,
    pub cluster: ClusterState,
    pub paused_until_tick: u64,
    pub stabilizing_until_tick: u64,
    pub rates: Vec<OperatorRates>,
    totals: ResourceTotals,
    steady: Vec<OperatorRates>,
    noise: f64,
    rng: ChaCha8Rng,
}

impl SimState {
    /// Places the scenario's initial configuration and starts the first
    /// stabilization period.
    pub fn new(scenario: &Scenario, timing: &Timing, seed: u64, noise: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&noise) {
            return Err(Error::InvalidParameter("noise must lie in [0, 1)".into()));
        }
        let config = scenario.initial_config.clone();
        let cluster = place(scenario, &config, &ClusterState::empty(scenario.provisioning_limit))?;
        Ok(SimState {
            tick: 0,
            dt_s: timing.dt_s,
            totals: total_resources(&config, &scenario.graph, &scenario.scheme, &scenario.tm_spec)?,
            steady: saturate(scenario, &config)?,
            rates: vec![OperatorRates::default(); scenario.graph.operators.len()],
            config,
            cluster,
            paused_until_tick: 0,
            stabilizing_until_tick: timing.ticks(timing.stabilization_s)?,
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn clock(&self) -> f64 {
        self.tick as f64 * self.dt_s
    }

    pub fn is_paused(&self) -> bool {
        self.tick < self.paused_until_tick
    }

    pub fn is_stabilizing(&self) -> bool {
        self.tick < self.stabilizing_until_tick
    }

    pub fn totals(&self) -> ResourceTotals {
        self.totals
    }

    fn jitter(&mut self) -> f64 {
        if self.noise > 0.0 {
            1.0 + self.rng.gen_range(-self.noise..=self.noise)
        } else {
            1.0
        }
    }

    /// Advances one step in place and returns its trace points.
    pub fn advance(&mut self, scenario: &Scenario) -> Vec<TracePoint> {
        let time_s = self.clock();
        let paused = self.is_paused();
        let mut points = Vec::with_capacity(self.steady.len());
        for i in 0..self.steady.len() {
            let steady = self.steady[i];
            let mut r = if paused {
                OperatorRates {
                    hit_rate: steady.hit_rate,
                    access_latency: steady.access_latency,
                    ..OperatorRates::default()
                }
            } else {
                steady
            };
            let f = self.jitter();
            let g = self.jitter();
            r.offered *= f;
            r.processed *= f;
            r.output *= f;
            r.busyness = (r.busyness * f).min(1.0);
            r.hit_rate = r.hit_rate.map(|h| (h * g).min(1.0));
            r.access_latency = r.access_latency.map(|t| t / g);
            self.rates[i] = r;

            let op = &scenario.graph.operators[i];
            let c = *self.config.get(&op.id).expect("configuration covers the graph");
            points.push(TracePoint {
                time_s,
                operator: op.id.clone(),
                parallelism: c.parallelism,
                level: c.level,
                offered_rate: r.offered,
                processed_rate: r.processed,
                output_rate: r.output,
                busyness: r.busyness,
                hit_rate: r.hit_rate,
                access_latency: r.access_latency,
                backpressured: r.backpressured,
                total_cores: self.totals.cores,
                total_memory_mb: self.totals.memory_mb,
            });
        }
        self.tick += 1;
        points
    }
}

fn place(scenario: &Scenario, config: &Configuration, existing: &ClusterState) -> Result<ClusterState> {
    let demands = demands_for(config, &scenario.graph, &scenario.scheme)?;
    pack(&demands, &scenario.tm_spec, existing)
}

/// Pure single step: the next state and the trace points it emitted.
pub fn step(state: &SimState, scenario: &Scenario) -> (SimState, Vec<TracePoint>) {
    let mut next = state.clone();
    let points = next.advance(scenario);
    (next, points)
}

/// Enacts `new_config`: repacks the cluster, pauses processing for the
/// pause duration and restarts stabilization after it.
pub fn apply_configuration(
    state: &SimState,
    scenario: &Scenario,
    new_config: Configuration,
    timing: &Timing,
) -> Result<SimState> {
    let enact = || -> Result<SimState> {
        new_config.validate_for(&scenario.graph, &scenario.scheme)?;
        let cluster = place(scenario, &new_config, &state.cluster)?;
        let pause = timing.ticks(timing.pause_s)?;
        let stabilization = timing.ticks(timing.stabilization_s)?;
        let mut next = state.clone();
        next.totals = total_resources(&new_config, &scenario.graph, &scenario.scheme, &scenario.tm_spec)?;
        next.steady = saturate(scenario, &new_config)?;
        next.config = new_config.clone();
        next.cluster = cluster;
        next.paused_until_tick = state.tick + pause;
        next.stabilizing_until_tick = state.tick + pause + stabilization;
        Ok(next)
    };
    enact().map_err(|e| Error::ReconfigurationFailed(Box::new(e)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub policy: Policy,
    pub params: PolicyParams,
    pub timing: Timing,
    pub seed: u64,
    /// Relative amplitude of multiplicative metric noise; 0 disables it.
    pub noise: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            policy: Policy::Justin,
            params: PolicyParams::default(),
            timing: Timing::desk(),
            seed: 0,
            noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reconfiguration {
    pub time_s: f64,
    pub config: Configuration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunError {
    pub time_s: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub label: String,
    pub policy: Policy,
    pub final_config: String,
    pub reconfigurations: usize,
    pub windows: usize,
    /// End of the stabilization that followed the last reconfiguration.
    pub convergence_time_s: f64,
    pub final_cores: u32,
    pub final_memory_mb: f64,
    /// Mean source emission rate after the final stabilization.
    pub achieved_rate: f64,
    pub target_rate: f64,
    pub tm_count: usize,
    pub tm_occupancy: String,
    pub error: Option<String>,
}

impl RunSummary {
    pub fn reached_target(&self) -> bool {
        self.achieved_rate >= self.target_rate * (1.0 - 1e-9)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub policy: Policy,
    pub trace: Vec<TracePoint>,
    /// C^0 followed by every enacted configuration.
    pub configurations: Vec<Configuration>,
    pub reconfigurations: Vec<Reconfiguration>,
    pub history: DecisionHistory,
    pub cluster: ClusterState,
    pub error: Option<RunError>,
    pub summary: RunSummary,
}

impl RunOutcome {
    pub fn final_config(&self) -> &Configuration {
        self.configurations.last().expect("initial configuration is always present")
    }
}

/// Runs `scenario` until its horizon. Placement failures end the trace and
/// are reported in [`RunOutcome::error`]; other failures are returned.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<RunOutcome> {
    scenario.validate()?;
    opts.params.validate()?;
    opts.timing.validate()?;
    let policy = if scenario.autoscaling {
        opts.policy.effective(&opts.params)
    } else {
        Policy::None
    };
    let timing = &opts.timing;
    let window_ticks = timing.ticks(timing.window_s)?;
    let total_ticks = (scenario.horizon_s / timing.dt_s - 1e-9).ceil() as u64;

    let mut state = SimState::new(scenario, timing, opts.seed, opts.noise)?;
    let mut trace = Vec::new();
    let mut history = DecisionHistory::new();
    let mut configurations = vec![state.config.clone()];
    let mut reconfigurations = Vec::new();
    let mut error = None;
    let mut window: Vec<TracePoint> = Vec::new();
    let mut window_start: Option<u64> = None;
    let mut windows = 0;

    while state.tick < total_ticks {
        let tick = state.tick;
        let points = state.advance(scenario);
        trace.extend(points.iter().cloned());
        if tick < state.stabilizing_until_tick {
            continue;
        }
        let start = *window_start.get_or_insert(tick);
        window.extend(points);
        if tick + 1 - start < window_ticks {
            continue;
        }
        let metrics = aggregate(&window, start as f64 * timing.dt_s, state.clock())?;
        window.clear();
        window_start = None;
        windows += 1;

        let decision = decide(policy, &metrics, &scenario.graph, &state.config, &mut history, &opts.params)?;
        if let Decision::Reconfigure(next) = decision {
            match apply_configuration(&state, scenario, next.clone(), timing) {
                Ok(s) => {
                    state = s;
                    reconfigurations.push(Reconfiguration {
                        time_s: state.clock(),
                        config: next.clone(),
                    });
                    configurations.push(next);
                }
                Err(e) => {
                    error = Some(RunError {
                        time_s: state.clock(),
                        message: e.to_string(),
                    });
                    break;
                }
            }
        }
    }

    let settled = state.stabilizing_until_tick as f64 * timing.dt_s;
    let summary = summarize(scenario, policy, &state, &trace, &reconfigurations, windows, settled, &error);
    Ok(RunOutcome {
        policy,
        trace,
        configurations,
        reconfigurations,
        history,
        cluster: state.cluster,
        error,
        summary,
    })
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    scenario: &Scenario,
    policy: Policy,
    state: &SimState,
    trace: &[TracePoint],
    reconfigurations: &[Reconfiguration],
    windows: usize,
    settled_s: f64,
    error: &Option<RunError>,
) -> RunSummary {
    let sources: Vec<&str> = scenario.graph.sources().map(|s| s.id.as_str()).collect();
    let mut per_tick: std::collections::BTreeMap<u64, f64> = Default::default();
    for p in trace.iter().filter(|p| p.time_s >= settled_s && sources.contains(&p.operator.as_str())) {
        *per_tick.entry((p.time_s / state.dt_s).round() as u64).or_default() += p.processed_rate;
    }
    let mut rates: Vec<f64> = per_tick.into_values().collect();
    rates.sort_by(f64::total_cmp);
    let achieved_rate = if rates.is_empty() {
        0.0
    } else {
        rates.iter().sum::<f64>() / rates.len() as f64
    };
    let totals = state.totals();
    RunSummary {
        label: scenario.label.clone(),
        policy,
        final_config: state.config.describe(),
        reconfigurations: reconfigurations.len(),
        windows,
        convergence_time_s: if reconfigurations.is_empty() { 0.0 } else { settled_s },
        final_cores: totals.cores,
        final_memory_mb: totals.memory_mb,
        achieved_rate,
        target_rate: scenario.graph.target_rate * sources.len() as f64,
        tm_count: state.cluster.tm_count(),
        tm_occupancy: state.cluster.occupancy(),
        error: error.as_ref().map(|e| e.message.clone()),
    }
}
