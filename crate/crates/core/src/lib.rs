//! Simulator and policy library for hybrid CPU/memory autoscaling of
//! stream processing queries.
//!
//! A [`workload::Scenario`] describes a query graph, its initial
//! configuration and the cluster it runs on. [`sim::run`] drives it through
//! time under a [`policy::Policy`], producing a trace of per-operator rates
//! and the sequence of configurations the policy chose.

pub mod backend;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod placement;
pub mod policy;
pub mod sim;
pub mod trace;
pub mod workload;

pub use error::{Error, Result};
pub use model::{
    Configuration, MemoryLevel, MemoryLevelScheme, OperatorConfig, OperatorKind, OperatorSpec,
    QueryGraph, TaskManagerSpec,
};
pub use policy::{Policy, PolicyParams};
pub use sim::{run, RunOptions, RunOutcome, RunSummary, Timing};
pub use workload::Scenario;
