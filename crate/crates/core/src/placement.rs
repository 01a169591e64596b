//! Task placement onto task managers by first-fit-decreasing bin packing.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    Configuration, MemoryLevelScheme, OperatorId, OperatorKind, QueryGraph, ResourceTotals,
    TaskManagerSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskDemand {
    pub operator: OperatorId,
    pub task_index: u32,
    pub cores: u32,
    pub managed_mb: f64,
}

impl TaskDemand {
    pub fn new(operator: impl Into<OperatorId>, task_index: u32, managed_mb: f64) -> Self {
        TaskDemand {
            operator: operator.into(),
            task_index,
            cores: 1,
            managed_mb,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskManager {
    pub spec: TaskManagerSpec,
    pub tasks: Vec<TaskDemand>,
}

impl TaskManager {
    pub fn new(spec: TaskManagerSpec) -> Self {
        TaskManager {
            spec,
            tasks: Vec::new(),
        }
    }

    pub fn used_cores(&self) -> u32 {
        self.tasks.iter().map(|t| t.cores).sum()
    }

    pub fn used_managed_mb(&self) -> f64 {
        self.tasks.iter().map(|t| t.managed_mb).sum()
    }

    pub fn fits(&self, demand: &TaskDemand) -> bool {
        self.tasks.len() < self.spec.slots as usize
            && self.used_cores() + demand.cores <= self.spec.cores
            && self.used_managed_mb() + demand.managed_mb <= self.spec.managed_memory_budget_mb
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterState {
    pub tms: Vec<TaskManager>,
    pub provisioning_limit: usize,
}

impl ClusterState {
    pub fn empty(provisioning_limit: usize) -> Self {
        ClusterState {
            tms: Vec::new(),
            provisioning_limit,
        }
    }

    pub fn tm_count(&self) -> usize {
        self.tms.len()
    }

    pub fn task_count(&self) -> usize {
        self.tms.iter().map(|tm| tm.tasks.len()).sum()
    }

    /// `"<tasks>/<slots>:<managed>MB"` per task manager, space separated.
    pub fn occupancy(&self) -> String {
        self.tms
            .iter()
            .map(|tm| {
                format!(
                    "{}/{}:{}MB",
                    tm.tasks.len(),
                    tm.spec.slots,
                    tm.used_managed_mb()
                )
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn ffd_order(a: &TaskDemand, b: &TaskDemand) -> Ordering {
    b.managed_mb
        .total_cmp(&a.managed_mb)
        .then_with(|| a.operator.cmp(&b.operator))
        .then_with(|| a.task_index.cmp(&b.task_index))
}

/// Repacks every demand. Existing task managers are emptied and filled first,
/// new ones are provisioned up to the limit, and task managers left empty are
/// released.
pub fn pack(
    demands: &[TaskDemand],
    tm_spec: &TaskManagerSpec,
    existing: &ClusterState,
) -> Result<ClusterState> {
    let limit = existing.provisioning_limit;
    let mut sorted = demands.to_vec();
    sorted.sort_by(ffd_order);

    for d in &sorted {
        let fits_empty = d.managed_mb <= tm_spec.managed_memory_budget_mb
            && d.cores <= tm_spec.cores
            && tm_spec.slots >= 1;
        if !fits_empty {
            return Err(Error::UnsatisfiableDemand {
                operator: d.operator.clone(),
                task_index: d.task_index,
                managed_mb: d.managed_mb,
                budget_mb: tm_spec.managed_memory_budget_mb,
            });
        }
    }

    let mut tms: Vec<TaskManager> = existing
        .tms
        .iter()
        .map(|tm| TaskManager::new(tm.spec))
        .collect();
    for (i, d) in sorted.iter().enumerate() {
        match tms.iter_mut().find(|tm| tm.fits(d)) {
            Some(tm) => tm.tasks.push(d.clone()),
            None => {
                if tms.len() >= limit {
                    return Err(Error::CapacityExhausted {
                        limit,
                        unplaced: sorted.len() - i,
                    });
                }
                let mut tm = TaskManager::new(*tm_spec);
                tm.tasks.push(d.clone());
                tms.push(tm);
            }
        }
    }
    tms.retain(|tm| !tm.tasks.is_empty());
    Ok(ClusterState {
        tms,
        provisioning_limit: limit,
    })
}

pub fn fleet_resources(state: &ClusterState) -> ResourceTotals {
    state
        .tms
        .iter()
        .map(|tm| ResourceTotals {
            cores: tm.spec.cores,
            memory_mb: tm.spec.total_memory_mb,
        })
        .fold(ResourceTotals::default(), |a, b| a + b)
}

/// One demand per task of every non-source operator.
pub fn demands_for(
    config: &Configuration,
    graph: &QueryGraph,
    scheme: &MemoryLevelScheme,
) -> Result<Vec<TaskDemand>> {
    let mut demands = Vec::new();
    for op in &graph.operators {
        if op.kind == OperatorKind::Source {
            continue;
        }
        let c = config.entry(&op.id)?;
        let managed = scheme.memory_for_level(c.level)?;
        demands.extend((0..c.parallelism).map(|i| TaskDemand::new(op.id.clone(), i, managed)));
    }
    Ok(demands)
}
