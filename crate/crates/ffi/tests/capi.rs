use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use streamscale_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ss_last_error()) }.to_string_lossy().into_owned()
}

fn scenario(name: &str) -> *mut SsScenario {
    let name = CString::new(name).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { ss_scenario_builtin(name.as_ptr(), 0.0, &mut out) }, SsStatus::Ok);
    out
}

fn simulate(s: *const SsScenario, policy: SsPolicy) -> *mut SsRun {
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { ss_run(s, policy, &mut run) }, SsStatus::Ok, "{}", last_error());
    run
}

fn summary(run: *const SsRun) -> SsSummary {
    let mut out = SsSummary {
        reconfigurations: 0,
        final_cores: 0,
        final_memory_mb: 0.0,
        achieved_rate: 0.0,
        target_rate: 0.0,
        convergence_time_s: 0.0,
        tm_count: 0,
        failed: false,
    };
    assert_eq!(unsafe { ss_run_summary(run, &mut out) }, SsStatus::Ok);
    out
}

#[test]
fn q1_strips_memory_through_the_c_api() {
    let s = scenario("q1");
    let ds2 = summary(simulate(s, SsPolicy::Ds2));
    let run = simulate(s, SsPolicy::Justin);
    let justin = summary(run);
    assert_eq!(ds2.final_cores, 8);
    assert_eq!(justin.final_cores, 8);
    assert_eq!(ds2.final_memory_mb - justin.final_memory_mb, 8.0 * 158.0);
    assert!(!justin.failed);

    let n = unsafe { ss_run_trace_len(run) };
    assert!(n > 0);
    let mut p = unsafe { std::mem::zeroed::<SsTracePoint>() };
    assert_eq!(unsafe { ss_run_trace_point(run, n - 1, &mut p) }, SsStatus::Ok);
    let name = unsafe { CStr::from_ptr(ss_scenario_operator_name(s, p.operator_index as usize)) };
    assert!(["source", "map", "sink"].contains(&name.to_str().unwrap()));
    assert_eq!(p.total_memory_mb, 2832.0);
    assert_eq!(
        unsafe { ss_run_trace_point(run, n, &mut p) },
        SsStatus::InvalidArgument
    );
    assert!(last_error().contains("out of range"));
    unsafe {
        ss_run_free(run);
        ss_scenario_free(s);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut out = ptr::null_mut();
    let bad = CString::new("q4").unwrap();
    assert_eq!(unsafe { ss_scenario_builtin(bad.as_ptr(), 0.0, &mut out) }, SsStatus::ConfigError);
    assert!(last_error().contains("q4"));
    assert_eq!(unsafe { ss_scenario_builtin(ptr::null(), 0.0, &mut out) }, SsStatus::NullPointer);
    let json = CString::new(r#"{"scenario": "q11", "unknown": 1}"#).unwrap();
    assert_eq!(unsafe { ss_scenario_from_json(json.as_ptr(), &mut out) }, SsStatus::ConfigError);
    assert_eq!(unsafe { ss_run(ptr::null(), SsPolicy::Ds2, &mut ptr::null_mut()) }, SsStatus::NullPointer);
    assert_eq!(unsafe { ss_scenario_operator_count(ptr::null()) }, 0);
    unsafe {
        ss_scenario_free(ptr::null_mut());
        ss_run_free(ptr::null_mut());
    }
}

#[test]
fn placement_failure_is_reported_in_summary() {
    let json = CString::new(r#"{"scenario": "q11", "provisioning_limit": 1}"#).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { ss_scenario_from_json(json.as_ptr(), &mut s) }, SsStatus::Ok);
    let run = simulate(s, SsPolicy::Ds2);
    assert!(summary(run).failed);
    unsafe {
        ss_run_free(run);
        ss_scenario_free(s);
    }
}

#[test]
fn trace_file_matches_between_seeded_runs() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("q8");
    assert_eq!(unsafe { ss_scenario_set_seed(s, 42) }, SsStatus::Ok);
    let mut files = Vec::new();
    for i in 0..2 {
        let run = simulate(s, SsPolicy::Justin);
        let path = dir.path().join(format!("t{i}.csv"));
        let c = CString::new(path.to_str().unwrap()).unwrap();
        assert_eq!(unsafe { ss_run_write_trace(run, c.as_ptr()) }, SsStatus::Ok);
        files.push(std::fs::read(path).unwrap());
        unsafe { ss_run_free(run) };
    }
    assert_eq!(files[0], files[1]);
    assert!(files[0].starts_with(b"time_s,operator,parallelism"));
    unsafe { ss_scenario_free(s) };
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/streamscale.h")
}

#[test]
fn header_declares_the_api() {
    let text = std::fs::read_to_string(header()).unwrap();
    for decl in [
        "typedef struct SsScenario SsScenario;",
        "typedef struct SsRun SsRun;",
        "SS_STATUS_OK = 0",
        "SS_POLICY_JUSTIN = 2",
        "enum SsStatus ss_run(const struct SsScenario *scenario, enum SsPolicy policy, struct SsRun **out);",
        "const char *ss_last_error(void);",
        "size_t ss_run_trace_len(const struct SsRun *run);",
    ] {
        assert!(text.contains(decl), "missing `{decl}`");
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "streamscale.h"

int main(void) {
    SsScenario *s = NULL;
    if (ss_scenario_builtin("q11", 0.0, &s) != SS_STATUS_OK) return 10;
    SsRun *r = NULL;
    if (ss_run(s, SS_POLICY_JUSTIN, &r) != SS_STATUS_OK) return 11;
    SsSummary sum;
    if (ss_run_summary(r, &sum) != SS_STATUS_OK) return 12;
    printf("%u %u %.0f\n", sum.reconfigurations, sum.final_cores, sum.final_memory_mb);
    if (ss_scenario_builtin("nope", 0.0, &s) != SS_STATUS_CONFIG_ERROR) return 13;
    ss_run_free(r);
    ss_scenario_free(s);
    return 0;
}
"#;

#[test]
fn c_program_links_against_static_library() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libstreamscale_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status);
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "3 3 2326");
}
