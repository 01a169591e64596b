//! C ABI over the `streamscale` simulator.
//!
//! Scenarios and runs are opaque handles owned by the caller and released
//! with their `*_free` function. Every fallible call returns an [`SsStatus`];
//! on failure [`ss_last_error`] describes the problem.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use streamscale::config::RunConfig;
use streamscale::policy::Policy;
use streamscale::sim::{run, RunOptions, RunOutcome};
use streamscale::trace::write_trace;
use streamscale::workload::builtin;
use streamscale::{Error, MemoryLevel, Scenario};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigError = 3,
    SimulationError = 4,
    IoError = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsPolicy {
    None = 0,
    Ds2 = 1,
    Justin = 2,
}

impl From<SsPolicy> for Policy {
    fn from(p: SsPolicy) -> Self {
        match p {
            SsPolicy::None => Policy::None,
            SsPolicy::Ds2 => Policy::Ds2,
            SsPolicy::Justin => Policy::Justin,
        }
    }
}

/// A scenario together with the run options it was loaded with.
pub struct SsScenario {
    scenario: Scenario,
    options: RunOptions,
    names: Vec<CString>,
}

pub struct SsRun {
    outcome: RunOutcome,
    points: Vec<SsTracePoint>,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsSummary {
    pub reconfigurations: u32,
    pub final_cores: u32,
    pub final_memory_mb: f64,
    pub achieved_rate: f64,
    pub target_rate: f64,
    pub convergence_time_s: f64,
    pub tm_count: u32,
    /// True when a reconfiguration failed and ended the run early.
    pub failed: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsTracePoint {
    pub time_s: f64,
    /// Index into the scenario's operators, see [`ss_scenario_operator_name`].
    pub operator_index: u32,
    pub parallelism: u32,
    /// -1 when the operator has no managed memory.
    pub mem_level: i32,
    pub offered_rate: f64,
    pub processed_rate: f64,
    pub busyness: f64,
    /// NaN for operators without state.
    pub cache_hit_rate: f64,
    /// NaN for operators without state.
    pub access_latency_s: f64,
    pub backpressured: bool,
    pub total_cores: u32,
    pub total_memory_mb: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> SsStatus {
    match e {
        Error::Io(_) => SsStatus::IoError,
        e if e.is_config_error() => SsStatus::ConfigError,
        Error::UnknownOperator(_) | Error::MissingMemoryLevel(_) | Error::InsufficientMemory { .. } => {
            SsStatus::ConfigError
        }
        _ => SsStatus::SimulationError,
    }
}

/// Runs `body`, converting errors and panics into a status.
fn guard(body: impl FnOnce() -> Result<(), (SsStatus, String)>) -> SsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SsStatus::Panic
        }
    }
}

fn fail(e: Error) -> (SsStatus, String) {
    (status_of(&e), e.to_string())
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, (SsStatus, String)> {
    if s.is_null() {
        return Err((SsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| (SsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn into_handle(scenario: Scenario, options: RunOptions) -> *mut SsScenario {
    let names = scenario
        .graph
        .operators
        .iter()
        .map(|op| CString::new(op.id.replace('\0', " ")).unwrap_or_default())
        .collect();
    Box::into_raw(Box::new(SsScenario {
        scenario,
        options,
        names,
    }))
}

/// Message of the last failed call on this thread. Valid until the next
/// call into this library from the same thread.
#[no_mangle]
pub extern "C" fn ss_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a built-in scenario with default run options. A non-positive
/// `target_rate` keeps the scenario's default rate.
///
/// # Safety
/// `name` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_scenario_builtin(
    name: *const c_char,
    target_rate: f64,
    out: *mut *mut SsScenario,
) -> SsStatus {
    guard(|| {
        if out.is_null() {
            return Err((SsStatus::NullPointer, "out is null".into()));
        }
        let name = read_str(name, "name")?;
        let rate = (target_rate > 0.0).then_some(target_rate);
        let scenario = builtin(name, rate).map_err(fail)?;
        *out = into_handle(scenario, RunOptions::default());
        Ok(())
    })
}

/// Loads a scenario and run options from a JSON run configuration, the
/// same document the command-line tool accepts.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_scenario_from_json(
    json: *const c_char,
    out: *mut *mut SsScenario,
) -> SsStatus {
    guard(|| {
        if out.is_null() {
            return Err((SsStatus::NullPointer, "out is null".into()));
        }
        let text = read_str(json, "json")?;
        let cfg = RunConfig::from_json(text).map_err(fail)?;
        let scenario = cfg.scenario().map_err(fail)?;
        *out = into_handle(scenario, cfg.run_options());
        Ok(())
    })
}

/// # Safety
/// `scenario` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ss_scenario_free(scenario: *mut SsScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Number of operators, or 0 for a null handle.
///
/// # Safety
/// `scenario` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_scenario_operator_count(scenario: *const SsScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.names.len())
}

/// Operator id at `index`, owned by the scenario; null when out of range.
///
/// # Safety
/// `scenario` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_scenario_operator_name(
    scenario: *const SsScenario,
    index: usize,
) -> *const c_char {
    scenario
        .as_ref()
        .and_then(|s| s.names.get(index))
        .map_or(ptr::null(), |n| n.as_ptr())
}

/// Sets the seed used by subsequent runs of this scenario.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_scenario_set_seed(scenario: *mut SsScenario, seed: u64) -> SsStatus {
    guard(|| {
        let s = scenario
            .as_mut()
            .ok_or((SsStatus::NullPointer, "scenario is null".to_string()))?;
        s.options.seed = seed;
        Ok(())
    })
}

/// Simulates the scenario under `policy`. A run that stopped on a placement
/// failure still succeeds; its summary has `failed` set.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_run(
    scenario: *const SsScenario,
    policy: SsPolicy,
    out: *mut *mut SsRun,
) -> SsStatus {
    guard(|| {
        if out.is_null() {
            return Err((SsStatus::NullPointer, "out is null".into()));
        }
        let s = scenario
            .as_ref()
            .ok_or((SsStatus::NullPointer, "scenario is null".to_string()))?;
        let opts = RunOptions {
            policy: policy.into(),
            ..s.options.clone()
        };
        let outcome = run(&s.scenario, &opts).map_err(fail)?;
        let points = outcome
            .trace
            .iter()
            .map(|p| SsTracePoint {
                time_s: p.time_s,
                operator_index: s.scenario.graph.index_of(&p.operator).unwrap_or(usize::MAX) as u32,
                parallelism: p.parallelism,
                mem_level: match p.level {
                    MemoryLevel::None => -1,
                    MemoryLevel::Level(l) => i32::from(l),
                },
                offered_rate: p.offered_rate,
                processed_rate: p.processed_rate,
                busyness: p.busyness,
                cache_hit_rate: p.hit_rate.unwrap_or(f64::NAN),
                access_latency_s: p.access_latency.unwrap_or(f64::NAN),
                backpressured: p.backpressured,
                total_cores: p.total_cores,
                total_memory_mb: p.total_memory_mb,
            })
            .collect();
        *out = Box::into_raw(Box::new(SsRun { outcome, points }));
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a handle from [`ss_run`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ss_run_free(run: *mut SsRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_run_summary(run: *const SsRun, out: *mut SsSummary) -> SsStatus {
    guard(|| {
        let r = run
            .as_ref()
            .ok_or((SsStatus::NullPointer, "run is null".to_string()))?;
        if out.is_null() {
            return Err((SsStatus::NullPointer, "out is null".into()));
        }
        let s = &r.outcome.summary;
        *out = SsSummary {
            reconfigurations: s.reconfigurations as u32,
            final_cores: s.final_cores,
            final_memory_mb: s.final_memory_mb,
            achieved_rate: s.achieved_rate,
            target_rate: s.target_rate,
            convergence_time_s: s.convergence_time_s,
            tm_count: s.tm_count as u32,
            failed: s.error.is_some(),
        };
        Ok(())
    })
}

/// Number of trace points, or 0 for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_run_trace_len(run: *const SsRun) -> usize {
    run.as_ref().map_or(0, |r| r.points.len())
}

/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_run_trace_point(
    run: *const SsRun,
    index: usize,
    out: *mut SsTracePoint,
) -> SsStatus {
    guard(|| {
        let r = run
            .as_ref()
            .ok_or((SsStatus::NullPointer, "run is null".to_string()))?;
        if out.is_null() {
            return Err((SsStatus::NullPointer, "out is null".into()));
        }
        let p = r.points.get(index).ok_or((
            SsStatus::InvalidArgument,
            format!("trace index {index} out of range ({} points)", r.points.len()),
        ))?;
        *out = *p;
        Ok(())
    })
}

/// Writes the trace as CSV to `path`.
///
/// # Safety
/// `run` must be a live handle and `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ss_run_write_trace(run: *const SsRun, path: *const c_char) -> SsStatus {
    guard(|| {
        let r = run
            .as_ref()
            .ok_or((SsStatus::NullPointer, "run is null".to_string()))?;
        let path = read_str(path, "path")?;
        let file = File::create(path).map_err(|e| fail(e.into()))?;
        write_trace(BufWriter::new(file), &r.outcome.trace).map_err(fail)
    })
}
