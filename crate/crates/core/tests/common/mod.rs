//! Random scenario generators and invariant checks shared by the
//! integration and acceptance suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use streamscale::backend::{cache_hit_rate, BackendCalibration, MIB};
use streamscale::metrics::{aggregate, DecisionHistory, MetricWindow, OperatorWindow};
use streamscale::model::{
    Configuration, MemoryLevel, OperatorConfig, OperatorKind, OperatorSpec, QueryGraph,
};
use streamscale::policy::{decide, ds2_scale, justin_scale, Decision, Policy, PolicyParams};
use streamscale::sim::{saturate, step, SimState, Timing};
use streamscale::workload::Scenario;

pub type Case = (Scenario, Configuration);

#[derive(Debug, Clone)]
pub struct MidOp {
    stateful: bool,
    cpu: f64,
    selectivity: f64,
    reads: u8,
    writes: u8,
    state_mb: f64,
    upstream_mask: u32,
    parallelism: u32,
    level: u8,
    strip: bool,
}

fn arb_mid(allow_large_state: bool) -> impl Strategy<Value = MidOp> {
    let state_max = if allow_large_state { 2000.0 } else { 20.0 };
    (
        any::<bool>(),
        1e-6f64..1e-4,
        0.2f64..3.0,
        0u8..3,
        0u8..3,
        1.0f64..state_max,
        any::<u32>(),
        1u32..12,
        0u8..3,
        any::<bool>(),
    )
        .prop_map(
            |(stateful, cpu, selectivity, reads, writes, state_mb, upstream_mask, parallelism, level, strip)| MidOp {
                stateful,
                cpu,
                selectivity,
                reads,
                writes,
                state_mb,
                upstream_mask,
                parallelism,
                level,
                strip,
            },
        )
}

/// Builds a DAG: a source, the given operators wired to random earlier
/// vertices, and a sink fed by every operator without a consumer.
pub fn build(mids: &[MidOp], target: f64, chain: bool) -> Case {
    let mut operators = vec![OperatorSpec::source("source")];
    let mut edges: Vec<(String, String)> = Vec::new();
    let mut entries = BTreeMap::new();
    entries.insert("source".to_string(), OperatorConfig::new(1, MemoryLevel::None));
    let mut ids = vec!["source".to_string()];
    for (i, m) in mids.iter().enumerate() {
        let id = format!("op{i}");
        let (reads, writes) = if m.reads + m.writes == 0 { (1, 0) } else { (m.reads, m.writes) };
        let spec = if m.stateful {
            OperatorSpec::stateful(&id, m.cpu, m.selectivity, f64::from(reads), f64::from(writes), m.state_mb * MIB)
        } else {
            OperatorSpec::stateless(&id, m.cpu, m.selectivity)
        };
        let ups: Vec<String> = if chain {
            vec![ids.last().unwrap().clone()]
        } else {
            let chosen: Vec<String> = ids
                .iter()
                .enumerate()
                .filter(|(j, _)| m.upstream_mask >> j & 1 == 1)
                .map(|(_, u)| u.clone())
                .collect();
            if chosen.is_empty() { vec![ids.last().unwrap().clone()] } else { chosen }
        };
        for u in ups {
            edges.push((u, id.clone()));
        }
        let level = if m.stateful || !m.strip { MemoryLevel::Level(m.level) } else { MemoryLevel::None };
        entries.insert(id.clone(), OperatorConfig::new(m.parallelism, level));
        operators.push(spec);
        ids.push(id);
    }
    let leaves: Vec<String> = ids[1..]
        .iter()
        .filter(|id| !edges.iter().any(|(from, _)| from == *id))
        .cloned()
        .collect();
    operators.push(OperatorSpec::sink("sink", 1e-8));
    for l in leaves {
        edges.push((l, "sink".to_string()));
    }
    entries.insert("sink".to_string(), OperatorConfig::new(1, MemoryLevel::Level(0)));

    let graph = QueryGraph {
        operators,
        edges,
        target_rate: target,
    };
    let mut scenario = Scenario::from_graph("random", graph, 10.0);
    scenario.provisioning_limit = 10_000;
    let config = Configuration { entries, timestamp: 0 };
    scenario.initial_config = config.clone();
    (scenario, config)
}

pub fn arb_case() -> impl Strategy<Value = Case> {
    (prop::collection::vec(arb_mid(true), 1..5), 100.0f64..2e6, any::<bool>())
        .prop_map(|(mids, target, chain)| build(&mids, target, chain))
}

/// Operators whose true rate does not depend on parallelism: stateless, or
/// state small enough to always fit the level-0 cache.
pub fn arb_rate_stable_case() -> impl Strategy<Value = Case> {
    (prop::collection::vec(arb_mid(false), 1..5), 100.0f64..2e6, any::<bool>())
        .prop_map(|(mids, target, chain)| build(&mids, target, chain))
}

/// Window measured by one simulation step at `config`.
pub fn window_at(scenario: &Scenario, config: &Configuration) -> MetricWindow {
    let mut s = scenario.clone();
    s.initial_config = config.clone();
    let timing = Timing::desk();
    let state = SimState::new(&s, &timing, 0, 0.0).expect("placeable");
    let (_, points) = step(&state, &s);
    aggregate(&points, 0.0, timing.dt_s).expect("non-empty window")
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Sum over all source-to-`target` paths of target rate times the
/// selectivities of the operators before `target`, by path enumeration.
fn path_bound(graph: &QueryGraph, node: &str) -> f64 {
    let op = graph.operator(node).unwrap();
    if op.kind == OperatorKind::Source {
        return graph.target_rate;
    }
    graph
        .upstream(node)
        .map(|u| {
            let up = graph.operator(u).unwrap();
            let selectivity = if up.kind == OperatorKind::Source { 1.0 } else { up.selectivity };
            path_bound(graph, u) * selectivity
        })
        .sum()
}

/// Rate conservation, busyness and hit-rate ranges, processed ≤ offered, and
/// the path-selectivity bound on every operator's input.
pub fn check_step((scenario, config): &Case) -> Result<(), TestCaseError> {
    let state = SimState::new(scenario, &Timing::desk(), 0, 0.0).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let (_, points) = step(&state, scenario);
    let graph = &scenario.graph;
    let by_id: BTreeMap<&str, _> = points.iter().map(|p| (p.operator.as_str(), p)).collect();
    prop_assert_eq!(by_id.len(), graph.operators.len());
    let mut saturated = 0;
    for op in &graph.operators {
        let p = by_id[op.id.as_str()];
        prop_assert!((0.0..=1.0).contains(&p.busyness));
        if let Some(h) = p.hit_rate {
            prop_assert!((0.0..=1.0).contains(&h));
        }
        prop_assert!(p.processed_rate <= p.offered_rate * (1.0 + 1e-12));
        let selectivity = if op.kind == OperatorKind::Source { 1.0 } else { op.selectivity };
        prop_assert!(close(p.output_rate, p.processed_rate * selectivity));
        prop_assert_eq!(p.parallelism, config.get(&op.id).unwrap().parallelism);
        if op.kind != OperatorKind::Source {
            let inflow: f64 = graph.upstream(&op.id).map(|u| by_id[u].output_rate).sum();
            prop_assert!(close(p.offered_rate, inflow), "{}: offered {} inflow {}", op.id, p.offered_rate, inflow);
            prop_assert!(p.offered_rate <= path_bound(graph, &op.id) * (1.0 + 1e-9));
            if p.busyness == 1.0 {
                saturated += 1;
            }
        }
    }
    let throttled = by_id.values().any(|p| p.backpressured);
    let source = by_id["source"];
    prop_assert_eq!(throttled, source.processed_rate < graph.target_rate * (1.0 - 1e-12));
    if throttled {
        prop_assert!(saturated >= 1);
    }
    Ok(())
}

fn sink_rate(scenario: &Scenario, config: &Configuration) -> f64 {
    let rates = saturate(scenario, config).unwrap();
    let i = scenario.graph.index_of("sink").unwrap();
    rates[i].processed
}

/// Raising one operator's parallelism or memory level never lowers the sink rate.
pub fn check_monotone_capacity((scenario, config): &Case, pick: usize, raise_level: bool) -> Result<(), TestCaseError> {
    let ids: Vec<String> = config
        .entries
        .keys()
        .filter(|id| *id != "source")
        .cloned()
        .collect();
    let id = &ids[pick % ids.len()];
    let mut more = config.clone();
    let e = more.entries.get_mut(id).unwrap();
    match (raise_level, e.level) {
        (true, MemoryLevel::Level(l)) if l < 3 => e.level = MemoryLevel::Level(l + 1),
        _ => e.parallelism += 1,
    }
    let before = sink_rate(scenario, config);
    let after = sink_rate(scenario, &more);
    prop_assert!(after >= before * (1.0 - 1e-12), "{id}: {before} -> {after}");
    Ok(())
}

/// DS2's proposal is the smallest parallelism that keeps each operator at or
/// below `busy_high` under the measured true rates, and scale-outs also hold
/// in the simulator at the proposed configuration.
pub fn check_ds2_consistency((scenario, config): &Case, busy_high: f64) -> Result<(), TestCaseError> {
    let params = PolicyParams { busy_high, busy_low: busy_high / 4.0, ..PolicyParams::default() };
    let graph = &scenario.graph;
    let window = window_at(scenario, config);
    let next = ds2_scale(&window, graph, config, &params).map_err(|e| TestCaseError::fail(e.to_string()))?;

    let mut unthrottled = scenario.clone();
    unthrottled.graph.operators.iter_mut().filter(|o| o.kind == OperatorKind::Sink).for_each(|o| o.cpu_cost_per_event = 1e-15);
    let rates = saturate(&unthrottled, &next).unwrap();
    for (i, op) in graph.operators.iter().enumerate() {
        let c = next.get(&op.id).unwrap();
        let old = config.get(&op.id).unwrap();
        prop_assert_eq!((c.level, c.scaled_up), (old.level, old.scaled_up));
        if matches!(op.kind, OperatorKind::Source | OperatorKind::Sink) {
            prop_assert_eq!(c.parallelism, old.parallelism);
            continue;
        }
        let w = &window.operators[&op.id];
        let true_rate = w.processed_rate / (f64::from(old.parallelism) * w.busyness);
        let required = path_bound(graph, &op.id);
        let predicted = required / (f64::from(c.parallelism) * true_rate);
        prop_assert!(predicted <= busy_high + 1e-9, "{}: predicted {}", op.id, predicted);
        if c.parallelism > 1 {
            let one_less = required / (f64::from(c.parallelism - 1) * true_rate);
            prop_assert!(one_less > busy_high - 1e-9, "{}: not minimal", op.id);
        }
        // Fewer tasks mean more state per task, so only scale-outs keep the
        // measured true rate as a lower bound.
        if c.parallelism >= old.parallelism {
            prop_assert!(rates[i].busyness <= busy_high + 1e-9, "{}: simulated {}", op.id, rates[i].busyness);
        }
    }
    Ok(())
}

/// ds2_scale applied to a window measured at its own output returns the same parallelisms.
pub fn check_ds2_fixed_point((scenario, config): &Case) -> Result<(), TestCaseError> {
    let params = PolicyParams::default();
    let mut s = scenario.clone();
    s.graph.operators.iter_mut().filter(|o| o.kind == OperatorKind::Sink).for_each(|o| o.cpu_cost_per_event = 1e-15);
    let first = ds2_scale(&window_at(&s, config), &s.graph, config, &params).unwrap();
    let second = ds2_scale(&window_at(&s, &first), &s.graph, &first, &params).unwrap();
    for (id, c) in &first.entries {
        prop_assert_eq!(c.parallelism, second.get(id).unwrap().parallelism, "{}", id);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct JustinInput {
    pub prev_p: u32,
    pub proposed_p: u32,
    pub prev_level: u8,
    pub prev_v: bool,
    pub stateless: bool,
    pub theta: (f64, f64),
    pub tau: (f64, f64),
    pub max_level: u8,
}

pub fn arb_justin_input() -> impl Strategy<Value = JustinInput> {
    (2u8..5).prop_flat_map(|max_level| {
        (
            1u32..20,
            1u32..20,
            0..max_level,
            any::<bool>(),
            prop::bool::weighted(0.2),
            (0.0f64..=1.0, 0.0f64..=1.0),
            (1e-5f64..5e-3, 1e-5f64..5e-3),
            Just(max_level),
        )
            .prop_map(|(prev_p, proposed_p, prev_level, v, stateless, theta, tau, max_level)| JustinInput {
                prev_p,
                proposed_p,
                prev_level,
                // v = true only after a scale-up, which implies level >= 1.
                prev_v: v && prev_level >= 1,
                stateless,
                theta,
                tau,
                max_level,
            })
    })
}

fn op_window(theta: Option<f64>, tau: Option<f64>) -> OperatorWindow {
    OperatorWindow {
        busyness: 0.9,
        offered_rate: 1.0,
        processed_rate: 1.0,
        output_rate: 1.0,
        hit_rate: theta,
        access_latency: tau,
        backpressured: false,
    }
}

/// Structural invariants of one Justin decision for a single operator.
pub fn check_justin(input: &JustinInput) -> Result<(), TestCaseError> {
    let params = PolicyParams { max_level: input.max_level, ..PolicyParams::default() };
    let level = MemoryLevel::Level(input.prev_level);
    let prev_cfg = OperatorConfig { parallelism: input.prev_p, level, scaled_up: input.prev_v };
    let previous = Configuration { entries: [("op".to_string(), prev_cfg)].into(), timestamp: 5 };
    let mut proposal = previous.clone();
    proposal.timestamp = 6;
    proposal.entries.get_mut("op").unwrap().parallelism = input.proposed_p;

    let metrics = |t: f64, l: f64| {
        if input.stateless { op_window(None, None) } else { op_window(Some(t), Some(l)) }
    };
    let mut history = DecisionHistory::new();
    let mut older = previous.clone();
    older.timestamp = 4;
    let mk = |w| MetricWindow { start_s: 0.0, end_s: 1.0, operators: [("op".to_string(), w)].into() };
    history.record(&older, mk(metrics(input.theta.0, input.tau.0))).unwrap();
    let window = mk(metrics(input.theta.1, input.tau.1));
    history.record(&previous, window.clone()).unwrap();

    let out = justin_scale(&proposal, &previous, &history, &window, &params).unwrap();
    let o = *out.get("op").unwrap();

    prop_assert_eq!(o.level.is_none(), input.stateless);
    if input.stateless {
        prop_assert_eq!(o.parallelism, input.proposed_p);
        return Ok(());
    }
    let m = o.level.level().unwrap();
    let rollback = input.prev_v && m + 1 == input.prev_level;
    if o.scaled_up {
        prop_assert_eq!(o.parallelism, input.prev_p);
        prop_assert_eq!(m, input.prev_level + 1);
        prop_assert!(m < input.max_level);
    } else if rollback {
        prop_assert_eq!(o.parallelism, input.proposed_p);
    } else {
        prop_assert!(m == input.prev_level);
    }
    let p_changed = o.parallelism != input.prev_p;
    let m_changed = m != input.prev_level;
    if !rollback {
        prop_assert!(!(p_changed && m_changed));
    }
    let pressured = input.theta.1 < params.delta_theta || input.tau.1 > params.delta_tau;
    let headroom = input.prev_level + 1 < input.max_level;
    if !input.prev_v && input.proposed_p != input.prev_p {
        prop_assert_eq!(o.scaled_up, pressured && headroom);
    }
    if input.proposed_p == input.prev_p {
        prop_assert_eq!((o.parallelism, m, o.scaled_up), (input.prev_p, input.prev_level, false));
    }
    Ok(())
}

/// With the switch off, `decide` under Justin equals the DS2 pipeline.
pub fn check_disabled_equals_ds2(case: &Case) -> Result<(), TestCaseError> {
    let (scenario, config) = case;
    let params = PolicyParams { justin_enabled: false, ..PolicyParams::default() };
    let window = window_at(scenario, config);
    let a = decide(Policy::Justin, &window, &scenario.graph, config, &mut DecisionHistory::new(), &params).unwrap();
    let b = decide(Policy::Ds2, &window, &scenario.graph, config, &mut DecisionHistory::new(), &params).unwrap();
    prop_assert_eq!(&a, &b);
    if let Decision::Reconfigure(c) = a {
        let direct = ds2_scale(&window, &scenario.graph, config, &params).unwrap();
        prop_assert_eq!(c, direct);
    }
    Ok(())
}

/// cache_hit_rate is nondecreasing in cache size and nonincreasing in state size.
pub fn check_hit_rate_monotone(c: (f64, f64), s: (f64, f64), reads: f64) -> Result<(), TestCaseError> {
    let cal = BackendCalibration::default();
    let (c_lo, c_hi) = if c.0 <= c.1 { c } else { (c.1, c.0) };
    let (s_lo, s_hi) = if s.0 <= s.1 { s } else { (s.1, s.0) };
    prop_assert!(cache_hit_rate(c_lo, s.0, reads, &cal) <= cache_hit_rate(c_hi, s.0, reads, &cal));
    prop_assert!(cache_hit_rate(c.0, s_hi, reads, &cal) <= cache_hit_rate(c.0, s_lo, reads, &cal));
    Ok(())
}
