//! Command-line workflow around the [`cthrv`] toolkit: scenario generation,
//! parameter fitting, estimator benchmarking, string-stability verdicts,
//! resimulation against recorded lead speeds, and sensor comparison.
//!
//! Every subcommand writes its primary artifact plus a sibling manifest at
//! `<output stem>.manifest.json` describing the run: subcommand, resolved
//! configuration, effective seed, input and output paths, toolkit version,
//! per-phase wall-clock seconds, and final status.  Reruns with the same
//! inputs, configuration, and seed reproduce every artifact byte for byte;
//! recorded wall-clock times are the one exception, so runs are compared
//! modulo the timing fields.
//!
//! Exit codes: 0 success, 2 usage or configuration problems, 3 input-data
//! problems, 4 estimation or simulation failures.  The manifest of a failed
//! run records the same classification in its `error` field.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use cthrv::batch::{fit_batch, BatchConfig};
use cthrv::least_squares::fit_least_squares;
use cthrv::metrics::{fit_report, FitReport};
use cthrv::model::{ModelParams, Stability, StabilityVerdict};
use cthrv::particle_filter::{fit_particle_filter, DegenerateClass, PfConfig};
use cthrv::sim::{simulate_follower, ScenarioSpec};
use cthrv::trajectory::{
    compare_sensors, Trajectory, TrajectoryFormat, DEFAULT_GAP_BIN_WIDTH,
    DEFAULT_REL_SPEED_BIN_WIDTH,
};
use cthrv::ErrorCategory;

// ---------------------------------------------------------------------------
// Command-line surface
// ---------------------------------------------------------------------------

/// Identification toolkit for the constant-time-headway relative-velocity
/// car-following model.
#[derive(Debug, Parser)]
#[command(name = "cthrv", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic follower trajectory CSV.
    Generate(GenerateArgs),
    /// Fit model parameters to a trajectory with one estimator.
    Fit(FitArgs),
    /// Run all three estimators on one trajectory and tabulate them.
    Benchmark(BenchmarkArgs),
    /// Classify string stability of a parameter triple.
    Stability(StabilityArgs),
    /// Resimulate a follower against the lead speeds of a trajectory.
    Simulate(SimulateArgs),
    /// Compare two aligned recordings of the same drive sample by sample.
    CompareSensors(CompareSensorsArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Scenario JSON (model parameters, lead profile, initial conditions);
    /// omitted: the built-in 620 s benchmark scenario.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the lead-profile jitter seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trajectory CSV destination.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Trajectory CSV with columns `time,v,s` plus `v_l` or `dv`.
    #[arg(long)]
    pub input: PathBuf,
    /// Estimator to run.
    #[arg(long, value_enum)]
    pub method: Method,
    /// Estimator configuration JSON with optional `batch` and `pf`
    /// sections; omitted sections use the built-in defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the selected estimator's seed (ignored for `ls`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report destination.
    #[arg(long)]
    pub output: PathBuf,
    /// Report file format.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Trajectory CSV with columns `time,v,s` plus `v_l` or `dv`.
    #[arg(long)]
    pub input: PathBuf,
    /// Estimator configuration JSON with optional `batch` and `pf`
    /// sections; omitted sections use the built-in defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides both stochastic estimators' seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output stem: writes `<stem>.csv`, `<stem>.json`, and
    /// `<stem>.manifest.json`.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    /// Spacing-error feedback gain, 1/s^2.
    #[arg(long, required_unless_present = "input")]
    pub k1: Option<f64>,
    /// Relative-speed feedback gain, 1/s.
    #[arg(long, required_unless_present = "input")]
    pub k2: Option<f64>,
    /// Desired time gap, s.
    #[arg(long, required_unless_present = "input")]
    pub tau: Option<f64>,
    /// Reads the triple from a report JSON (any file with a `params`
    /// object) instead of the flags.
    #[arg(long, conflicts_with_all = ["k1", "k2", "tau"])]
    pub input: Option<PathBuf>,
    /// Verdict JSON destination.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Trajectory CSV supplying the lead-speed series and sample period.
    #[arg(long)]
    pub input: PathBuf,
    /// Spacing-error feedback gain, 1/s^2.
    #[arg(long)]
    pub k1: f64,
    /// Relative-speed feedback gain, 1/s.
    #[arg(long)]
    pub k2: f64,
    /// Desired time gap, s.
    #[arg(long)]
    pub tau: f64,
    /// Follower initial speed, m/s; omitted: the first lead speed.
    #[arg(long)]
    pub v0: Option<f64>,
    /// Follower initial space gap, m; omitted: the equilibrium gap
    /// `tau * v0`.
    #[arg(long)]
    pub s0: Option<f64>,
    /// Trajectory CSV destination.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareSensorsArgs {
    /// First recording (differenced against the second).
    pub left: PathBuf,
    /// Second recording; must share the first one's length and rate.
    pub right: PathBuf,
    /// Space-gap histogram bin width, m.
    #[arg(long, default_value_t = DEFAULT_GAP_BIN_WIDTH)]
    pub bin_width_gap: f64,
    /// Relative-speed histogram bin width, m/s.
    #[arg(long, default_value_t = DEFAULT_REL_SPEED_BIN_WIDTH)]
    pub bin_width_speed: f64,
    /// Comparison JSON destination.
    #[arg(long)]
    pub output: PathBuf,
}

/// Estimator selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Closed-form linear least squares.
    Ls,
    /// Multi-start simulation-error minimization.
    Batch,
    /// Online particle filter.
    Pf,
}

/// Report file format for `fit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

fn method_label(m: Method) -> &'static str {
    match m {
        Method::Ls => "ls",
        Method::Batch => "batch",
        Method::Pf => "pf",
    }
}

fn stability_label(c: Stability) -> &'static str {
    match c {
        Stability::Stable => "stable",
        Stability::Unstable => "unstable",
        Stability::Marginal => "marginal",
    }
}

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

/// Anything a subcommand can fail with, classified for process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] cthrv::Error),

    #[error("invalid config file {path}: {msg}")]
    BadConfig { path: String, msg: String },

    #[error("cannot read parameters from {path}: {msg}")]
    BadReport { path: String, msg: String },

    #[error("CTHRV_THREADS must be a positive integer, got `{0}`")]
    BadThreads(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("cannot serialize {what}: {msg}")]
    Serialize { what: &'static str, msg: String },
}

impl CliError {
    /// Process exit code: 2 usage/validation, 3 data, 4 estimation.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e.category() {
                ErrorCategory::Validation => 2,
                ErrorCategory::Data => 3,
                ErrorCategory::Estimation => 4,
            },
            CliError::BadConfig { .. } | CliError::BadThreads(_) => 2,
            CliError::BadReport { .. } | CliError::Io { .. } | CliError::Serialize { .. } => 3,
        }
    }

    fn category_name(&self) -> &'static str {
        match self.exit_code() {
            2 => "validation",
            3 => "data",
            _ => "estimation",
        }
    }
}

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

/// One timed phase of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    /// Wall-clock duration, s.
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    Error,
}

/// Machine-readable failure record, mirrored by the process exit code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunError {
    pub message: String,
    pub category: String,
    pub exit_code: u8,
}

/// Self-description of one CLI run, written next to the outputs.  A rerun
/// fed the recorded configuration, seed, and inputs reproduces the outputs
/// byte for byte (`phases` excepted: wall-clock times vary).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    /// Effective seed of the run's stochastic stage, if it has one.
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Fully resolved configuration after defaults and overrides.
    pub config: serde_json::Value,
    pub phases: Vec<Phase>,
    pub status: RunStatus,
    pub error: Option<RunError>,
}

/// Where the manifest for `output` goes: the last extension (if any) is
/// replaced by `manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    output.with_extension("manifest.json")
}

/// Accumulates the manifest while a subcommand runs.
struct RunContext {
    manifest: RunManifest,
}

impl RunContext {
    fn new(subcommand: &str) -> Self {
        RunContext {
            manifest: RunManifest {
                subcommand: subcommand.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed: None,
                inputs: Vec::new(),
                outputs: Vec::new(),
                config: serde_json::Value::Null,
                phases: Vec::new(),
                status: RunStatus::Error,
                error: None,
            },
        }
    }

    fn input(&mut self, path: &Path) {
        self.manifest.inputs.push(path.display().to_string());
    }

    fn output(&mut self, path: &Path) {
        self.manifest.outputs.push(path.display().to_string());
    }

    fn set_seed(&mut self, seed: Option<u64>) {
        self.manifest.seed = seed;
    }

    fn set_config<T: Serialize>(&mut self, config: &T) -> Result<(), CliError> {
        self.manifest.config = to_value(config, "resolved configuration")?;
        Ok(())
    }

    /// Runs `f`, recording its wall-clock duration as a named phase.
    fn phase<T>(
        &mut self,
        name: &str,
        f: impl FnOnce() -> Result<T, CliError>,
    ) -> Result<T, CliError> {
        let start = Instant::now();
        let out = f();
        self.push_phase(name, start.elapsed().as_secs_f64());
        out
    }

    fn push_phase(&mut self, name: &str, seconds: f64) {
        self.manifest.phases.push(Phase {
            name: name.to_string(),
            seconds,
        });
    }

    /// Seals the manifest with the run outcome and writes it.  The primary
    /// failure (if any) wins over a manifest-write failure.
    fn finish(mut self, at: &Path, result: Result<(), CliError>) -> Result<(), CliError> {
        match &result {
            Ok(()) => self.manifest.status = RunStatus::Success,
            Err(e) => {
                self.manifest.status = RunStatus::Error;
                self.manifest.error = Some(RunError {
                    message: e.to_string(),
                    category: e.category_name().to_string(),
                    exit_code: e.exit_code(),
                });
            }
        }
        let written = write_json(&self.manifest, "manifest", at);
        result.and(written)
    }
}

// ---------------------------------------------------------------------------
// Estimator configuration files
// ---------------------------------------------------------------------------

/// On-disk estimator configuration shared by `fit` and `benchmark`: a JSON
/// object with optional `batch` and `pf` sections.  `fit` reads only the
/// section for its method, so one file drives both subcommands and the
/// benchmark table reproduces the per-method `fit` results exactly.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfigFile {
    pub batch: BatchConfig,
    pub pf: PfPatch,
}

/// Partial particle-filter configuration: every omitted field falls back to
/// [`PfConfig::reference`] anchored at the trajectory's first sample.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PfPatch {
    pub n_particles: Option<usize>,
    pub init_mean: Option<[f64; 5]>,
    pub init_std: Option<[f64; 5]>,
    pub process_std: Option<[f64; 5]>,
    pub meas_std: Option<[f64; 2]>,
    pub seed: Option<u64>,
    pub degenerate_class: Option<DegenerateClass>,
}

impl PfPatch {
    /// Resolves the patch against the reference configuration for `traj`.
    /// A `--seed` override beats a seed from the file.
    pub fn resolve(&self, traj: &Trajectory, seed_override: Option<u64>) -> PfConfig {
        let mut cfg = PfConfig::reference(traj.s()[0], traj.v()[0]);
        if let Some(n) = self.n_particles {
            cfg.n_particles = n;
        }
        if let Some(m) = self.init_mean {
            cfg.init_mean = m;
        }
        if let Some(sd) = self.init_std {
            cfg.init_std = sd;
        }
        if let Some(sd) = self.process_std {
            cfg.process_std = sd;
        }
        if let Some(sd) = self.meas_std {
            cfg.meas_std = sd;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(c) = self.degenerate_class {
            cfg.degenerate_class = c;
        }
        if let Some(seed) = seed_override {
            cfg.seed = seed;
        }
        cfg
    }
}

fn resolve_batch(file: &EstimatorConfigFile, seed_override: Option<u64>) -> BatchConfig {
    let mut cfg = file.batch.clone();
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    cfg
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Outcome of one estimator run on one trajectory: the estimate itself, its
/// error summary against the data, and the stability verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub method: Method,
    pub params: ModelParams,
    /// Wall-clock seconds around the estimator call only (no I/O, no
    /// report simulation).
    pub runtime_s: f64,
    pub stability: StabilityVerdict,
    /// Fraction of final particles classified string unstable; particle
    /// filter only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub instability_probability: Option<f64>,
    pub fit: FitReport,
}

impl EstimationReport {
    /// Header matching [`EstimationReport::csv_row`].
    pub fn csv_header() -> String {
        format!(
            "method,k1,k2,tau,runtime_s,lambda,stability,instability_probability,{}",
            FitReport::csv_header()
        )
    }

    /// Scalar fields as one CSV row (histograms are JSON-only).
    pub fn csv_row(&self) -> String {
        let instability = match self.instability_probability {
            Some(p) => format!("{p:.16e}"),
            None => String::new(),
        };
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{}",
            method_label(self.method),
            self.params.k1(),
            self.params.k2(),
            self.params.tau(),
            self.runtime_s,
            self.stability.lambda,
            stability_label(self.stability.classification),
            instability,
            self.fit.csv_row(),
        )
    }
}

/// What one method contributed to a benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MethodOutcome {
    Success { report: EstimationReport },
    Error { message: String, category: String },
}

/// All three estimators on one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub ls: MethodOutcome,
    pub batch: MethodOutcome,
    pub pf: MethodOutcome,
}

impl BenchmarkReport {
    pub fn outcome(&self, method: Method) -> &MethodOutcome {
        match method {
            Method::Ls => &self.ls,
            Method::Batch => &self.batch,
            Method::Pf => &self.pf,
        }
    }

    /// The comparison table as CSV: one column per method, one row per
    /// metric.  A failed method contributes `error` cells.
    pub fn table_csv(&self) -> String {
        type Cell = fn(&EstimationReport) -> String;
        let rows: [(&str, Cell); 7] = [
            ("k1", |r| format!("{:.16e}", r.params.k1())),
            ("k2", |r| format!("{:.16e}", r.params.k2())),
            ("tau", |r| format!("{:.16e}", r.params.tau())),
            ("runtime_s", |r| format!("{:.16e}", r.runtime_s)),
            ("mae_speed", |r| format!("{:.16e}", r.fit.mae_speed)),
            ("mae_spacing", |r| format!("{:.16e}", r.fit.mae_spacing)),
            ("stability", |r| {
                stability_label(r.stability.classification).to_string()
            }),
        ];
        let mut out = String::from("metric,ls,batch,pf\n");
        for (name, cell) in rows {
            out.push_str(name);
            for method in [Method::Ls, Method::Batch, Method::Pf] {
                out.push(',');
                match self.outcome(method) {
                    MethodOutcome::Success { report } => out.push_str(&cell(report)),
                    MethodOutcome::Error { .. } => out.push_str("error"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Verdict artifact of the `stability` subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub params: ModelParams,
    pub lambda: f64,
    pub classification: Stability,
}

// ---------------------------------------------------------------------------
// Entry point and dispatch
// ---------------------------------------------------------------------------

/// Runs one parsed command line to completion.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    init_threads()?;
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Stability(a) => cmd_stability(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::CompareSensors(a) => cmd_compare_sensors(a),
    }
}

/// Applies the `CTHRV_THREADS` cap to the process-global thread pool.  The
/// pool can only be sized once per process; later calls keep the first
/// size, which matches the once-per-invocation CLI lifecycle.
fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("CTHRV_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::BadThreads(raw.clone()))?;
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_generate(a: &GenerateArgs) -> Result<(), CliError> {
    let mut ctx = RunContext::new("generate");
    let result = generate_inner(a, &mut ctx);
    ctx.finish(&manifest_path(&a.output), result)
}

fn generate_inner(a: &GenerateArgs, ctx: &mut RunContext) -> Result<(), CliError> {
    let mut spec = match &a.config {
        Some(path) => {
            ctx.input(path);
            read_config::<ScenarioSpec>(path)?
        }
        None => ScenarioSpec::benchmark(),
    };
    if let Some(seed) = a.seed {
        spec.profile.seed = seed;
    }
    ctx.set_config(&spec)?;
    ctx.set_seed(Some(spec.profile.seed));
    ctx.output(&a.output);
    let traj = ctx.phase("generate", || spec.generate().map_err(CliError::from))?;
    ctx.phase("write", || write_trajectory(&traj, &a.output))
}

fn cmd_fit(a: &FitArgs) -> Result<(), CliError> {
    let mut ctx = RunContext::new("fit");
    let result = fit_inner(a, &mut ctx);
    ctx.finish(&manifest_path(&a.output), result)
}

fn fit_inner(a: &FitArgs, ctx: &mut RunContext) -> Result<(), CliError> {
    ctx.input(&a.input);
    ctx.output(&a.output);
    let traj = ctx.phase("load", || load_trajectory(&a.input))?;
    let file = load_config_file(a.config.as_deref(), ctx)?;

    let resolved = match a.method {
        Method::Ls => serde_json::json!({ "method": "ls" }),
        Method::Batch => {
            let cfg = resolve_batch(&file, a.seed);
            ctx.set_seed(Some(cfg.seed));
            serde_json::json!({ "method": "batch", "batch": to_value(&cfg, "batch config")? })
        }
        Method::Pf => {
            let cfg = file.pf.resolve(&traj, a.seed);
            ctx.set_seed(Some(cfg.seed));
            serde_json::json!({ "method": "pf", "pf": to_value(&cfg, "pf config")? })
        }
    };
    ctx.manifest.config = resolved;

    let report = fit_one(&traj, a.method, &file, a.seed).map_err(CliError::from)?;
    ctx.push_phase("estimate", report.runtime_s);

    ctx.phase("write", || match a.format {
        Format::Json => write_json(&report, "report", &a.output),
        Format::Csv => {
            let text = format!("{}\n{}\n", EstimationReport::csv_header(), report.csv_row());
            write_text(&text, &a.output)
        }
    })
}

fn cmd_benchmark(a: &BenchmarkArgs) -> Result<(), CliError> {
    let mut ctx = RunContext::new("benchmark");
    let result = benchmark_inner(a, &mut ctx);
    ctx.finish(&manifest_path(&a.output), result)
}

fn benchmark_inner(a: &BenchmarkArgs, ctx: &mut RunContext) -> Result<(), CliError> {
    ctx.input(&a.input);
    let csv_path = a.output.with_extension("csv");
    let json_path = a.output.with_extension("json");
    ctx.output(&csv_path);
    ctx.output(&json_path);

    let traj = ctx.phase("load", || load_trajectory(&a.input))?;
    let file = load_config_file(a.config.as_deref(), ctx)?;
    ctx.set_seed(a.seed);
    let batch_cfg = resolve_batch(&file, a.seed);
    let pf_cfg = file.pf.resolve(&traj, a.seed);
    ctx.manifest.config = serde_json::json!({
        "batch": to_value(&batch_cfg, "batch config")?,
        "pf": to_value(&pf_cfg, "pf config")?,
    });

    let mut outcome = |method: Method| -> Result<MethodOutcome, CliError> {
        ctx.phase(method_label(method), || {
            Ok(match fit_one(&traj, method, &file, a.seed) {
                Ok(report) => MethodOutcome::Success { report },
                Err(e) => MethodOutcome::Error {
                    message: e.to_string(),
                    category: CliError::from(e).category_name().to_string(),
                },
            })
        })
    };
    let report = BenchmarkReport {
        ls: outcome(Method::Ls)?,
        batch: outcome(Method::Batch)?,
        pf: outcome(Method::Pf)?,
    };

    ctx.phase("write", || {
        write_json(&report, "benchmark report", &json_path)?;
        write_text(&report.table_csv(), &csv_path)
    })
}

fn cmd_stability(a: &StabilityArgs) -> Result<(), CliError> {
    let mut ctx = RunContext::new("stability");
    let result = stability_inner(a, &mut ctx);
    ctx.finish(&manifest_path(&a.output), result)
}

fn stability_inner(a: &StabilityArgs, ctx: &mut RunContext) -> Result<(), CliError> {
    let params = match &a.input {
        Some(path) => {
            ctx.input(path);
            read_report_params(path)?
        }
        // clap enforces presence of all three flags when --input is absent.
        None => ModelParams::new(
            a.k1.expect("clap requires k1"),
            a.k2.expect("clap requires k2"),
            a.tau.expect("clap requires tau"),
        )?,
    };
    ctx.set_config(&params)?;
    ctx.output(&a.output);
    let verdict = ctx.phase("classify", || params.string_stability().map_err(CliError::from))?;
    let report = StabilityReport {
        params,
        lambda: verdict.lambda,
        classification: verdict.classification,
    };
    ctx.phase("write", || write_json(&report, "stability report", &a.output))
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let mut ctx = RunContext::new("simulate");
    let result = simulate_inner(a, &mut ctx);
    ctx.finish(&manifest_path(&a.output), result)
}

fn simulate_inner(a: &SimulateArgs, ctx: &mut RunContext) -> Result<(), CliError> {
    ctx.input(&a.input);
    ctx.output(&a.output);
    let lead = ctx.phase("load", || load_trajectory(&a.input))?;
    let params = ModelParams::new(a.k1, a.k2, a.tau)?;
    let v0 = a.v0.unwrap_or(lead.v_l()[0]);
    let s0 = a.s0.unwrap_or(params.tau() * v0);
    ctx.manifest.config = serde_json::json!({
        "params": to_value(&params, "params")?,
        "v0": v0,
        "s0": s0,
    });
    let traj = ctx.phase("simulate", || {
        simulate_follower(&params, lead.v_l(), v0, s0, lead.dt()).map_err(CliError::from)
    })?;
    ctx.phase("write", || write_trajectory(&traj, &a.output))
}

fn cmd_compare_sensors(a: &CompareSensorsArgs) -> Result<(), CliError> {
    let mut ctx = RunContext::new("compare-sensors");
    let result = compare_sensors_inner(a, &mut ctx);
    ctx.finish(&manifest_path(&a.output), result)
}

fn compare_sensors_inner(a: &CompareSensorsArgs, ctx: &mut RunContext) -> Result<(), CliError> {
    ctx.input(&a.left);
    ctx.input(&a.right);
    ctx.output(&a.output);
    ctx.manifest.config = serde_json::json!({
        "bin_width_gap": a.bin_width_gap,
        "bin_width_speed": a.bin_width_speed,
    });
    let left = ctx.phase("load", || load_trajectory(&a.left))?;
    let right = ctx.phase("load", || load_trajectory(&a.right))?;
    let cmp = ctx.phase("compare", || {
        compare_sensors(&left, &right, a.bin_width_gap, a.bin_width_speed)
            .map_err(CliError::from)
    })?;
    ctx.phase("write", || write_json(&cmp, "sensor comparison", &a.output))
}

// ---------------------------------------------------------------------------
// Estimation core shared by `fit` and `benchmark`
// ---------------------------------------------------------------------------

/// Runs one estimator on `traj` and assembles its report.  `benchmark`
/// calls this once per method with the same inputs `fit` would receive, so
/// the two subcommands agree value for value.
fn fit_one(
    traj: &Trajectory,
    method: Method,
    file: &EstimatorConfigFile,
    seed: Option<u64>,
) -> Result<EstimationReport, cthrv::Error> {
    let (params, runtime_s, instability) = match method {
        Method::Ls => {
            let start = Instant::now();
            let params = fit_least_squares(traj)?;
            (params, start.elapsed().as_secs_f64(), None)
        }
        Method::Batch => {
            let cfg = resolve_batch(file, seed);
            let start = Instant::now();
            let result = fit_batch(traj, &cfg)?;
            (result.params, start.elapsed().as_secs_f64(), None)
        }
        Method::Pf => {
            let cfg = file.pf.resolve(traj, seed);
            let start = Instant::now();
            let result = fit_particle_filter(traj, &cfg)?;
            (
                result.params,
                start.elapsed().as_secs_f64(),
                Some(result.instability_probability),
            )
        }
    };
    Ok(EstimationReport {
        method,
        params,
        runtime_s,
        stability: params.string_stability()?,
        instability_probability: instability,
        fit: fit_report(traj, &params)?,
    })
}

// ---------------------------------------------------------------------------
// File I/O helpers
// ---------------------------------------------------------------------------

fn load_config_file(
    path: Option<&Path>,
    ctx: &mut RunContext,
) -> Result<EstimatorConfigFile, CliError> {
    match path {
        Some(p) => {
            ctx.input(p);
            read_config(p)
        }
        None => Ok(EstimatorConfigFile::default()),
    }
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bad = |msg: String| CliError::BadConfig {
        path: path.display().to_string(),
        msg,
    };
    let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| bad(e.to_string()))
}

/// Pulls a parameter triple out of a report JSON: any object with a
/// `params` field (fit reports, stability reports) or a bare triple.
fn read_report_params(path: &Path) -> Result<ModelParams, CliError> {
    #[derive(Deserialize)]
    struct ParamsHolder {
        params: ModelParams,
    }
    let bad = |msg: String| CliError::BadReport {
        path: path.display().to_string(),
        msg,
    };
    let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    if let Ok(holder) = serde_json::from_str::<ParamsHolder>(&text) {
        return Ok(holder.params);
    }
    serde_json::from_str::<ModelParams>(&text).map_err(|e| bad(e.to_string()))
}

/// Loads a trajectory CSV, picking format A (`v_l`) or B (`dv`) from the
/// header.
fn load_trajectory(path: &Path) -> Result<Trajectory, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let header = text.lines().next().unwrap_or("");
    let format = if header.split(',').any(|h| h.trim() == "dv") {
        TrajectoryFormat::RelativeSpeed
    } else {
        TrajectoryFormat::LeadSpeed
    };
    Trajectory::from_csv(text.as_bytes(), format).map_err(CliError::from)
}

fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<(), CliError> {
    let mut buf = Vec::new();
    traj.to_csv(&mut buf)?;
    fs::write(path, buf).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn to_value<T: Serialize>(value: &T, what: &'static str) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(value).map_err(|e| CliError::Serialize {
        what,
        msg: e.to_string(),
    })
}

fn write_json<T: Serialize>(value: &T, what: &'static str, path: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Serialize {
        what,
        msg: e.to_string(),
    })?;
    text.push('\n');
    write_text(&text, path)
}

fn write_text(text: &str, path: &Path) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })
}
