//! Trace points and CSV serialization of traces.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::model::{MemoryLevel, OperatorId};

pub const TRACE_COLUMNS: [&str; 12] = [
    "time_s",
    "operator",
    "parallelism",
    "mem_level",
    "offered_rate",
    "processed_rate",
    "busyness",
    "cache_hit_rate",
    "access_latency_s",
    "backpressured",
    "total_cores",
    "total_memory_mb",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TracePoint {
    pub time_s: f64,
    pub operator: OperatorId,
    pub parallelism: u32,
    pub level: MemoryLevel,
    pub offered_rate: f64,
    pub processed_rate: f64,
    /// Not part of the CSV; kept for selectivity estimates.
    pub output_rate: f64,
    pub busyness: f64,
    pub hit_rate: Option<f64>,
    pub access_latency: Option<f64>,
    pub backpressured: bool,
    pub total_cores: u32,
    pub total_memory_mb: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_trace<W: Write>(out: W, points: &[TracePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for p in points {
        w.write_record([
            p.time_s.to_string(),
            p.operator.clone(),
            p.parallelism.to_string(),
            p.level.to_string(),
            p.offered_rate.to_string(),
            p.processed_rate.to_string(),
            p.busyness.to_string(),
            opt(p.hit_rate),
            opt(p.access_latency),
            p.backpressured.to_string(),
            p.total_cores.to_string(),
            p.total_memory_mb.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_none_level() {
        let p = TracePoint {
            time_s: 0.5,
            operator: "map".into(),
            parallelism: 7,
            level: MemoryLevel::None,
            offered_rate: 10.0,
            processed_rate: 10.0,
            output_rate: 10.0,
            busyness: 0.25,
            hit_rate: None,
            access_latency: None,
            backpressured: false,
            total_cores: 8,
            total_memory_mb: 2832.0,
        };
        let mut buf = Vec::new();
        write_trace(&mut buf, &[p]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), TRACE_COLUMNS.join(","));
        assert_eq!(lines.next().unwrap(), "0.5,map,7,none,10,10,0.25,,,false,8,2832");
    }
}
