//! Windowed metric aggregation and the decision history.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Configuration, OperatorId};
use crate::trace::TracePoint;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorWindow {
    pub busyness: f64,
    pub offered_rate: f64,
    pub processed_rate: f64,
    pub output_rate: f64,
    /// θ; absent for operators without a state backend.
    pub hit_rate: Option<f64>,
    /// τ in seconds per state operation; absent with θ.
    pub access_latency: Option<f64>,
    pub backpressured: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricWindow {
    pub start_s: f64,
    pub end_s: f64,
    pub operators: BTreeMap<OperatorId, OperatorWindow>,
}

impl MetricWindow {
    pub fn get(&self, id: &str) -> Result<&OperatorWindow> {
        self.operators
            .get(id)
            .ok_or_else(|| Error::UnknownOperator(id.to_string()))
    }
}

/// Order-independent mean: values are sorted before summation.
fn mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

fn mean_opt(values: Vec<Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.into_iter().flatten().collect();
    (!present.is_empty()).then(|| mean(present))
}

/// Averages every point with `start <= time < end`, per operator.
pub fn aggregate(points: &[TracePoint], start_s: f64, end_s: f64) -> Result<MetricWindow> {
    let mut grouped: BTreeMap<&str, Vec<&TracePoint>> = BTreeMap::new();
    for p in points.iter().filter(|p| p.time_s >= start_s && p.time_s < end_s) {
        grouped.entry(p.operator.as_str()).or_default().push(p);
    }
    if !(end_s > start_s) || grouped.is_empty() {
        return Err(Error::EmptyWindow {
            start: start_s,
            end: end_s,
        });
    }
    let operators = grouped
        .into_iter()
        .map(|(id, ps)| {
            let col = |f: fn(&TracePoint) -> f64| mean(ps.iter().map(|p| f(p)).collect());
            let w = OperatorWindow {
                busyness: col(|p| p.busyness),
                offered_rate: col(|p| p.offered_rate),
                processed_rate: col(|p| p.processed_rate),
                output_rate: col(|p| p.output_rate),
                hit_rate: mean_opt(ps.iter().map(|p| p.hit_rate).collect()),
                access_latency: mean_opt(ps.iter().map(|p| p.access_latency).collect()),
                backpressured: ps.iter().any(|p| p.backpressured),
            };
            (id.to_string(), w)
        })
        .collect();
    Ok(MetricWindow {
        start_s,
        end_s,
        operators,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub config: Configuration,
    pub window: MetricWindow,
}

/// One entry per configuration epoch: the configuration and the latest
/// window measured while it was active.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DecisionHistory {
    entries: Vec<HistoryEntry>,
}

impl DecisionHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last(&self) -> Option<&HistoryEntry> {
        self.entries.last()
    }

    /// Records a window measured under `config`. A second window for the same
    /// configuration replaces the first.
    pub fn record(&mut self, config: &Configuration, window: MetricWindow) -> Result<()> {
        match self.entries.last_mut() {
            Some(last) if last.config.timestamp == config.timestamp => {
                if !last.config.same_resources(config) {
                    return Err(Error::InconsistentHistory);
                }
                last.config = config.clone();
                last.window = window;
            }
            Some(last) if last.config.timestamp > config.timestamp => {
                return Err(Error::InconsistentHistory);
            }
            _ => self.entries.push(HistoryEntry {
                config: config.clone(),
                window,
            }),
        }
        Ok(())
    }
}

/// Whether θ or τ of `id` improved between the last two history entries by
/// more than the hysteresis fraction.
pub fn improvement(history: &DecisionHistory, id: &str, hysteresis: f64) -> Result<bool> {
    let n = history.len();
    if n < 2 {
        return Err(Error::InsufficientHistory(id.to_string()));
    }
    let now = history.entries[n - 1].window.get(id)?;
    let before = history.entries[n - 2].window.get(id)?;
    let theta = match (now.hit_rate, before.hit_rate) {
        (Some(t), Some(t0)) => t > t0 * (1.0 + hysteresis),
        _ => false,
    };
    let tau = match (now.access_latency, before.access_latency) {
        (Some(t), Some(t0)) => t < t0 * (1.0 - hysteresis),
        _ => false,
    };
    Ok(theta || tau)
}
