//! Analytical LSM state-backend model: managed memory split, cache hit rate
//! and per-access latency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MemoryLevel, MemoryLevelScheme, OperatorKind, OperatorSpec};

/// Bytes per MB. Cache sizes and state sizes are compared in binary units.
pub const MIB: f64 = 1_048_576.0;

pub const MAX_MEMTABLE_MB: f64 = 64.0;
pub const MIN_MANAGED_MB: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemorySplit {
    pub memtable_mb: f64,
    pub cache_mb: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendCalibration {
    pub mem_hit_latency: f64,
    pub disk_miss_latency: f64,
    pub memtable_write_latency: f64,
    pub small_memtable_write_penalty: f64,
    /// α: inflates raw state bytes into effective cache demand.
    pub working_set_overhead: f64,
}

impl Default for BackendCalibration {
    fn default() -> Self {
        BackendCalibration {
            mem_hit_latency: 40e-6,
            disk_miss_latency: 600e-6,
            memtable_write_latency: 80e-6,
            small_memtable_write_penalty: 1.3,
            working_set_overhead: 2.0,
        }
    }
}

impl BackendCalibration {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mem_hit_latency > 0.0
            && self.disk_miss_latency > self.mem_hit_latency
            && self.memtable_write_latency > 0.0
            && self.small_memtable_write_penalty > 0.0
            && self.working_set_overhead >= 1.0
            && [
                self.mem_hit_latency,
                self.disk_miss_latency,
                self.memtable_write_latency,
                self.small_memtable_write_penalty,
                self.working_set_overhead,
            ]
            .iter()
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "calibration needs positive latencies, disk slower than memory and α >= 1".into(),
            ))
        }
    }
}

/// MemTable gets the largest power of two strictly below half the total,
/// capped at 64 MB; the cache gets the rest.
pub fn split_managed_memory(total_mb: f64) -> Result<MemorySplit> {
    if !(total_mb >= MIN_MANAGED_MB) {
        return Err(Error::InsufficientMemory { total_mb });
    }
    let half = total_mb / 2.0;
    let mut memtable = 1.0_f64;
    while memtable * 2.0 < half && memtable < MAX_MEMTABLE_MB {
        memtable *= 2.0;
    }
    Ok(MemorySplit {
        memtable_mb: memtable,
        cache_mb: total_mb - memtable,
    })
}

/// Fraction of reads served from cache under uniform key access.
pub fn cache_hit_rate(
    cache_mb: f64,
    per_task_state_bytes: f64,
    reads_per_event: f64,
    cal: &BackendCalibration,
) -> f64 {
    if reads_per_event == 0.0 || per_task_state_bytes <= 0.0 {
        return 1.0;
    }
    let demand = cal.working_set_overhead * per_task_state_bytes;
    (cache_mb.max(0.0) * MIB / demand).min(1.0)
}

/// Seconds per event spent reading and writing state.
pub fn state_access_latency(
    hit_rate: f64,
    split: &MemorySplit,
    reads_per_event: f64,
    writes_per_event: f64,
    cal: &BackendCalibration,
) -> f64 {
    let read = reads_per_event
        * (hit_rate * cal.mem_hit_latency + (1.0 - hit_rate) * cal.disk_miss_latency);
    let penalty = if split.memtable_mb < MAX_MEMTABLE_MB {
        cal.small_memtable_write_penalty
    } else {
        1.0
    };
    read + writes_per_event * cal.memtable_write_latency * penalty
}

/// Cost of one event on one task, plus the backend metrics it implies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorModel {
    pub service_time: f64,
    /// θ; absent for operators without state.
    pub hit_rate: Option<f64>,
    /// τ: mean seconds per state operation; absent for operators without state.
    pub access_latency: Option<f64>,
}

impl OperatorModel {
    /// Events per second one task can process.
    pub fn capacity(&self) -> f64 {
        if self.service_time > 0.0 {
            1.0 / self.service_time
        } else {
            f64::INFINITY
        }
    }
}

pub fn evaluate_operator(
    op: &OperatorSpec,
    parallelism: u32,
    level: MemoryLevel,
    scheme: &MemoryLevelScheme,
    cal: &BackendCalibration,
) -> Result<OperatorModel> {
    if op.kind != OperatorKind::Stateful {
        return Ok(OperatorModel {
            service_time: op.cpu_cost_per_event,
            hit_rate: None,
            access_latency: None,
        });
    }
    if level.is_none() {
        return Err(Error::MissingMemoryLevel(op.id.clone()));
    }
    let split = split_managed_memory(scheme.memory_for_level(level)?)?;
    let per_task_state = op.total_state_bytes / f64::from(parallelism.max(1));
    let hit = cache_hit_rate(split.cache_mb, per_task_state, op.reads_per_event, cal);
    let latency = state_access_latency(hit, &split, op.reads_per_event, op.writes_per_event, cal);
    let ops = op.reads_per_event + op.writes_per_event;
    Ok(OperatorModel {
        service_time: op.cpu_cost_per_event + latency,
        hit_rate: Some(hit),
        access_latency: Some(latency / ops),
    })
}

pub fn per_event_service_time(
    op: &OperatorSpec,
    parallelism: u32,
    level: MemoryLevel,
    scheme: &MemoryLevelScheme,
    cal: &BackendCalibration,
) -> Result<f64> {
    evaluate_operator(op, parallelism, level, scheme, cal).map(|m| m.service_time)
}
