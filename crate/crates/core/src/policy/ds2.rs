use std::collections::HashMap;

use super::PolicyParams;
use crate::error::{Error, Result};
use crate::metrics::MetricWindow;
use crate::model::{Configuration, OperatorKind, QueryGraph};

/// Slack so that an exact ratio like 5.0 does not round up to 6 through
/// floating point noise.
const CEIL_SLACK: f64 = 1e-9;

/// Fires on a busy operator with a backpressured upstream, or on any
/// operator idling below the low band. Sources and sinks never trigger.
pub fn should_trigger(window: &MetricWindow, graph: &QueryGraph, params: &PolicyParams) -> bool {
    graph
        .operators
        .iter()
        .filter(|op| !matches!(op.kind, OperatorKind::Source | OperatorKind::Sink))
        .any(|op| {
            let Some(w) = window.operators.get(&op.id) else {
                return false;
            };
            let upstream_bp = graph
                .upstream(&op.id)
                .any(|u| window.operators.get(u).is_some_and(|uw| uw.backpressured));
            (w.busyness > params.busy_high && upstream_bp) || w.busyness < params.busy_low
        })
}

/// Parallelism for every processing operator so it runs at `busy_high`
/// when sources emit the target rate. Memory levels and flags are kept.
pub fn ds2_scale(
    window: &MetricWindow,
    graph: &QueryGraph,
    config: &Configuration,
    params: &PolicyParams,
) -> Result<Configuration> {
    let mut next = config.clone();
    next.timestamp = config.timestamp + 1;
    let mut required_out: HashMap<&str, f64> = HashMap::new();

    for idx in graph.topological_order()? {
        let op = &graph.operators[idx];
        if op.kind == OperatorKind::Source {
            required_out.insert(&op.id, graph.target_rate);
            continue;
        }
        let required_in: f64 = graph.upstream(&op.id).map(|u| required_out[u]).sum();
        let w = window.get(&op.id)?;

        if op.kind != OperatorKind::Sink {
            let p = config.entry(&op.id)?.parallelism;
            if w.busyness > 0.0 && w.processed_rate > 0.0 {
                let true_rate = w.processed_rate / (f64::from(p) * w.busyness);
                let wanted = (required_in / (true_rate * params.busy_high) - CEIL_SLACK).ceil();
                let entry = next.entries.get_mut(&op.id).expect("entry checked above");
                entry.parallelism = wanted.max(1.0).min(f64::from(u32::MAX)) as u32;
            } else if w.offered_rate > 0.0 {
                return Err(Error::UndefinedTrueRate(op.id.clone()));
            }
        }

        let selectivity = if w.processed_rate > 0.0 {
            w.output_rate / w.processed_rate
        } else {
            op.selectivity
        };
        required_out.insert(&op.id, required_in * selectivity);
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{op, window};
    use super::*;
    use crate::model::{MemoryLevel, OperatorSpec};

    fn graph(target: f64, ops: Vec<OperatorSpec>) -> QueryGraph {
        let mut all = vec![OperatorSpec::source("source")];
        all.extend(ops);
        all.push(OperatorSpec::sink("sink", 1e-7));
        QueryGraph::chain(all, target)
    }

    fn with_bp(mut w: crate::metrics::OperatorWindow) -> crate::metrics::OperatorWindow {
        w.backpressured = true;
        w
    }

    #[test]
    fn trigger_band() {
        let g = graph(1.0, vec![OperatorSpec::stateless("a", 1e-6, 1.0)]);
        let p = PolicyParams::default();
        let calm = window(vec![
            ("source", op(0.0, 1.0, 1.0, None, None)),
            ("a", op(0.5, 1.0, 1.0, None, None)),
            ("sink", op(0.01, 1.0, 0.0, None, None)),
        ]);
        assert!(!should_trigger(&calm, &g, &p));

        let busy_bp = window(vec![
            ("source", with_bp(op(0.0, 1.0, 1.0, None, None))),
            ("a", op(0.95, 1.0, 1.0, None, None)),
            ("sink", op(0.01, 1.0, 0.0, None, None)),
        ]);
        assert!(should_trigger(&busy_bp, &g, &p));

        let busy_free = window(vec![
            ("source", op(0.0, 1.0, 1.0, None, None)),
            ("a", op(0.95, 1.0, 1.0, None, None)),
            ("sink", op(0.01, 1.0, 0.0, None, None)),
        ]);
        assert!(!should_trigger(&busy_free, &g, &p));

        let idle = window(vec![
            ("source", op(0.0, 1.0, 1.0, None, None)),
            ("a", op(0.1, 1.0, 1.0, None, None)),
            ("sink", op(0.01, 1.0, 0.0, None, None)),
        ]);
        assert!(should_trigger(&idle, &g, &p));
    }

    #[test]
    fn true_rate_example() {
        let g = graph(50_000.0, vec![OperatorSpec::stateless("a", 1e-6, 1.0)]);
        let c = Configuration::initial(&g);
        let w = window(vec![
            ("source", op(0.0, 10_000.0, 10_000.0, None, None)),
            ("a", op(0.8, 10_000.0, 10_000.0, None, None)),
            ("sink", op(0.01, 10_000.0, 0.0, None, None)),
        ]);
        let next = ds2_scale(&w, &g, &c, &PolicyParams::default()).unwrap();
        // True rate 12,500; 50,000 / (12,500 * 0.8) = 5.
        assert_eq!(next.get("a").unwrap().parallelism, 5);
        assert_eq!(next.get("sink").unwrap().parallelism, 1);
        assert_eq!(next.timestamp, 1);
    }

    #[test]
    fn fixed_point_keeps_parallelism() {
        let g = graph(10_000.0, vec![OperatorSpec::stateless("a", 1e-6, 1.0)]);
        let mut c = Configuration::initial(&g);
        c.entries.get_mut("a").unwrap().parallelism = 4;
        let w = window(vec![
            ("source", op(0.0, 10_000.0, 10_000.0, None, None)),
            ("a", op(0.625, 10_000.0, 10_000.0, None, None)),
            ("sink", op(0.01, 10_000.0, 0.0, None, None)),
        ]);
        assert_eq!(ds2_scale(&w, &g, &c, &PolicyParams::default()).unwrap().get("a").unwrap().parallelism, 4);
    }

    #[test]
    fn selectivity_propagates_downstream() {
        let g = graph(
            10_000.0,
            vec![
                OperatorSpec::stateless("flatmap", 1e-6, 2.0),
                OperatorSpec::stateless("count", 1e-6, 1.0),
            ],
        );
        let c = Configuration::initial(&g);
        // Both operators run at true rate 10,000 per task.
        let w = window(vec![
            ("source", op(0.0, 4_000.0, 4_000.0, None, None)),
            ("flatmap", op(0.4, 4_000.0, 8_000.0, None, None)),
            ("count", op(0.8, 8_000.0, 8_000.0, None, None)),
            ("sink", op(0.01, 8_000.0, 0.0, None, None)),
        ]);
        let next = ds2_scale(&w, &g, &c, &PolicyParams::default()).unwrap();
        assert_eq!(next.get("flatmap").unwrap().parallelism, 2); // 10,000 / 8,000
        assert_eq!(next.get("count").unwrap().parallelism, 3); // 20,000 / 8,000
    }

    #[test]
    fn zero_busyness_with_load_is_an_error() {
        let g = graph(1.0, vec![OperatorSpec::stateless("a", 1e-6, 1.0)]);
        let c = Configuration::initial(&g);
        let mut a = op(0.0, 0.0, 0.0, None, None);
        a.offered_rate = 5.0;
        let w = window(vec![
            ("source", op(0.0, 5.0, 5.0, None, None)),
            ("a", a),
            ("sink", op(0.0, 0.0, 0.0, None, None)),
        ]);
        assert!(matches!(
            ds2_scale(&w, &g, &c, &PolicyParams::default()),
            Err(Error::UndefinedTrueRate(id)) if id == "a"
        ));
    }

    #[test]
    fn memory_fields_copied_through() {
        let g = graph(50_000.0, vec![OperatorSpec::stateful("s", 1e-6, 1.0, 1.0, 0.0, 1e6)]);
        let mut c = Configuration::initial(&g);
        let s = c.entries.get_mut("s").unwrap();
        s.level = MemoryLevel::Level(2);
        s.scaled_up = true;
        let w = window(vec![
            ("source", op(0.0, 10_000.0, 10_000.0, None, None)),
            ("s", op(1.0, 10_000.0, 10_000.0, Some(0.9), Some(1e-5))),
            ("sink", op(0.01, 10_000.0, 0.0, None, None)),
        ]);
        let next = ds2_scale(&w, &g, &c, &PolicyParams::default()).unwrap();
        let s = next.get("s").unwrap();
        assert_eq!((s.level, s.scaled_up), (MemoryLevel::Level(2), true));
    }
}
