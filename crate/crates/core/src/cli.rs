//! Command-line front end: `run`, `compare` and `sweep`.

use std::ffi::OsString;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{RunConfig, ScenarioRef, SweepConfig, OUTPUT_DIR_ENV};
use crate::error::{Error, Result};
use crate::experiment::{compare, sweep, Comparison, SweepRow};
use crate::policy::Policy;
use crate::sim::{run, RunOutcome, RunSummary};
use crate::trace::write_trace;
use crate::workload::{MicroKind, MICRO_MEMORY_MB};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SIMULATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "streamscale", version, about = "Simulate CPU and memory autoscaling of streaming queries")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario under one policy.
    Run(RunArgs),
    /// Run one scenario under DS2 and Justin and compare the outcomes.
    Compare(CommonArgs),
    /// Run a microbenchmark over a grid of parallelism and memory sizes.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in scenario: q1, q2, q3, q5, q8, q11 or micro:<kind>:<p>:<memory_mb>.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub target_rate: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub provisioning_limit: Option<usize>,
    #[arg(long)]
    pub busy_high: Option<f64>,
    #[arg(long)]
    pub busy_low: Option<f64>,
    #[arg(long)]
    pub delta_theta: Option<f64>,
    #[arg(long)]
    pub delta_tau: Option<f64>,
    #[arg(long)]
    pub max_level: Option<u8>,
    #[arg(long)]
    pub hysteresis: Option<f64>,
    #[arg(long)]
    pub justin_enabled: Option<bool>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub window: Option<f64>,
    #[arg(long)]
    pub stabilization: Option<f64>,
    #[arg(long)]
    pub pause: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative amplitude of seeded metric noise.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// none, ds2 or justin.
    #[arg(long)]
    pub policy: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// read, write or update.
    #[arg(long)]
    pub kind: Option<String>,
    /// Comma-separated task counts.
    #[arg(long, value_delimiter = ',')]
    pub parallelism: Option<Vec<u32>>,
    /// Comma-separated managed memory sizes in MB.
    #[arg(long, value_delimiter = ',')]
    pub memory: Option<Vec<f64>>,
}

/// Merges the config file with the flags, flags winning.
fn load(common: &CommonArgs) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = &common.scenario {
        cfg.scenario = Some(ScenarioRef::Builtin(s.clone()));
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = common.$flag { cfg.$field = Some(v); })*
        };
    }
    set!(target_rate => target_rate, horizon => horizon_s,
         provisioning_limit => provisioning_limit, seed => seed, noise => noise);

    let mut params = cfg.params.unwrap_or_default();
    macro_rules! param {
        ($($flag:ident),*) => {
            $(if let Some(v) = common.$flag { params.$flag = v; })*
        };
    }
    param!(busy_high, busy_low, delta_theta, delta_tau, max_level, hysteresis, justin_enabled);
    cfg.params = Some(params);

    let mut timing = cfg.timing.unwrap_or_default();
    if let Some(v) = common.dt {
        timing.dt_s = v;
    }
    if let Some(v) = common.window {
        timing.window_s = v;
    }
    if let Some(v) = common.stabilization {
        timing.stabilization_s = v;
    }
    if let Some(v) = common.pause {
        timing.pause_s = v;
    }
    cfg.timing = Some(timing);

    let out = match &common.output_dir {
        Some(dir) => dir.clone(),
        None => cfg.output_dir(std::env::var(OUTPUT_DIR_ENV).ok()),
    };
    Ok((cfg, out))
}

fn trace_path(dir: &Path, label: &str, policy: Policy) -> PathBuf {
    dir.join(format!("{label}_{policy}.csv"))
}

fn write_run(dir: &Path, outcome: &RunOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = trace_path(dir, &outcome.summary.label, outcome.policy);
    let mut w = BufWriter::new(File::create(path)?);
    write_trace(&mut w, &outcome.trace)?;
    w.flush()?;
    Ok(())
}

fn append_summaries(dir: &Path, summaries: &[&RunSummary]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join("summary.csv");
    let fresh = fs::metadata(&path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for s in summaries {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn describe(s: &RunSummary) -> String {
    let mut text = format!(
        "{} [{}]: {} reconfigurations, converged at {} s\n  final: {}\n  resources: {} cores, {} MB on {} TMs ({})\n  rate: {} / {} ev/s",
        s.label,
        s.policy,
        s.reconfigurations,
        s.convergence_time_s,
        s.final_config,
        s.final_cores,
        s.final_memory_mb,
        s.tm_count,
        s.tm_occupancy,
        s.achieved_rate.round(),
        s.target_rate.round(),
    );
    if let Some(e) = &s.error {
        text.push_str(&format!("\n  error: {e}"));
    }
    text
}

/// Failure that carries the exit status it maps to.
struct Failure {
    status: i32,
    error: Error,
}

fn config_err(error: Error) -> Failure {
    Failure {
        status: EXIT_CONFIG,
        error,
    }
}

fn sim_err(error: Error) -> Failure {
    Failure {
        status: EXIT_SIMULATION,
        error,
    }
}

fn cmd_run(args: &RunArgs) -> std::result::Result<i32, Failure> {
    let (mut cfg, dir) = load(&args.common).map_err(config_err)?;
    if let Some(p) = &args.policy {
        cfg.policy = Some(p.parse().map_err(config_err)?);
    }
    let scenario = cfg.scenario().map_err(config_err)?;
    let opts = cfg.run_options();
    let outcome = run(&scenario, &opts).map_err(classify)?;
    write_run(&dir, &outcome).map_err(sim_err)?;
    append_summaries(&dir, &[&outcome.summary]).map_err(sim_err)?;
    println!("{}", describe(&outcome.summary));
    Ok(if outcome.error.is_some() { EXIT_SIMULATION } else { EXIT_OK })
}

fn write_comparison(dir: &Path, c: &Comparison) -> Result<()> {
    let path = dir.join(format!("{}_comparison.csv", c.record.label));
    let mut w = csv::Writer::from_path(path)?;
    w.serialize(&c.record)?;
    w.flush()?;
    Ok(())
}

fn cmd_compare(args: &CommonArgs) -> std::result::Result<i32, Failure> {
    let (cfg, dir) = load(args).map_err(config_err)?;
    let scenario = cfg.scenario().map_err(config_err)?;
    let c = compare(&scenario, &cfg.run_options()).map_err(classify)?;
    for o in [&c.ds2, &c.justin] {
        write_run(&dir, o).map_err(sim_err)?;
    }
    append_summaries(&dir, &[&c.ds2.summary, &c.justin.summary]).map_err(sim_err)?;
    write_comparison(&dir, &c).map_err(sim_err)?;
    println!("{}\n{}", describe(&c.ds2.summary), describe(&c.justin.summary));
    let r = &c.record;
    println!(
        "justin/ds2: cores {:.3}, memory {:.3}, steps {} vs {}",
        r.cores_ratio, r.memory_ratio, r.justin_steps, r.ds2_steps
    );
    let failed = c.ds2.error.is_some() || c.justin.error.is_some();
    Ok(if failed { EXIT_SIMULATION } else { EXIT_OK })
}

fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["kind", "p", "memory_mb", "achieved_rate", "target_rate"])?;
    for r in rows {
        w.write_record([
            r.kind.to_string(),
            r.p.to_string(),
            r.memory_mb.to_string(),
            r.achieved_rate.to_string(),
            r.target_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> std::result::Result<i32, Failure> {
    let (cfg, dir) = load(&args.common).map_err(config_err)?;
    let file = cfg.sweep.clone().unwrap_or(SweepConfig {
        kind: None,
        parallelism: None,
        memory_mb: None,
    });
    let kind: MicroKind = match &args.kind {
        Some(k) => k.parse().map_err(config_err)?,
        None => file.kind.unwrap_or(MicroKind::Read),
    };
    let ps = args
        .parallelism
        .clone()
        .or(file.parallelism)
        .unwrap_or_else(|| vec![1, 2, 4, 8]);
    let ms = args
        .memory
        .clone()
        .or(file.memory_mb)
        .unwrap_or_else(|| MICRO_MEMORY_MB.to_vec());
    if ps.is_empty() || ms.is_empty() {
        return Err(config_err(Error::Config("sweep sets must be non-empty".into())));
    }
    let mut opts = cfg.run_options();
    opts.params.validate().map_err(config_err)?;
    opts.timing.validate().map_err(config_err)?;
    opts.policy = Policy::None;
    let rows = sweep(kind, &ps, &ms, &opts).map_err(classify)?;
    fs::create_dir_all(&dir).map_err(|e| sim_err(e.into()))?;
    let path = dir.join(format!("sweep_{kind}.csv"));
    write_sweep(&path, &rows).map_err(sim_err)?;
    for r in &rows {
        println!("{} p={} memory={} MB: {} / {} ev/s", r.kind, r.p, r.memory_mb, r.achieved_rate.round(), r.target_rate);
    }
    Ok(EXIT_OK)
}

fn classify(e: Error) -> Failure {
    if e.is_config_error() {
        config_err(e)
    } else {
        sim_err(e)
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(status) => status,
        Err(f) => {
            eprintln!("streamscale: {}", f.error);
            f.status
        }
    }
}
