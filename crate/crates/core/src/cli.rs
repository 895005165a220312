//! Command-line driver.
//!
//! ```text
//! sme-correlate correlate --model decay.json --sharp d0@1.0
//! sme-correlate correlate --model zoo:pure_noise --window d0:0,1 --window d0:0.5,1.5
//! sme-correlate simulate --model zoo:decay_photodetect --grid 0.001,3 --seed 7 --n-traj 10 --out runs/
//! sme-correlate compare --zoo-suite
//! sme-correlate run saved-config.json
//! ```
//!
//! Failures print one JSON error record on stderr. Exit status: 0 success,
//! 1 module failure, 2 usage error, 3 comparison outside the z threshold.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analytic::{
    filtered_correlation_with, quadrature_correlation_with, sharp_correlation_with, AnalyticConfig, CorrelationResult,
    SharpPoint, WindowFilter,
};
use crate::estimator::{
    run_comparison_labeled, run_zoo_suite, ComparisonOptions, ComparisonReport, ComparisonRequest, EnsembleSpec,
    DEFAULT_N_TRAJ, DEFAULT_Z_THRESHOLD,
};
use crate::model::{load_model_file, model_zoo, DensityMatrix, ModelFile, QuantumModel, ZOO_NAMES};
use crate::trajectories::{Scheme, SimulationOptions, Simulator, TimeGrid};

pub const EXIT_MODULE_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_COMPARISON_FAILED: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "sme-correlate", version, about = "Correlation functions of continuously monitored quantum systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact sharp or filtered correlation of the measurement signal.
    Correlate(CorrelateArgs),
    /// Simulate trajectories and write one record CSV per trajectory.
    Simulate(SimulateArgs),
    /// Compare Monte Carlo estimates against exact correlations.
    Compare(CompareArgs),
    /// Run a configuration written by --dump-config.
    Run { config: PathBuf },
    /// List the built-in models, or print one as a model file.
    Zoo {
        name: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct CorrelateArgs {
    /// Model file, or `zoo:NAME` for a built-in model.
    #[arg(long)]
    model: String,
    /// Sharp point `detector@time`; repeat for more legs.
    #[arg(long = "sharp", value_parser = parse_sharp)]
    sharp: Vec<SharpPoint>,
    /// Rect window `detector:start,end`; repeat for more legs.
    #[arg(long = "window", value_parser = parse_window)]
    windows: Vec<WindowFilter>,
    /// Horizon for windows (defaults to the end of the last window).
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, value_enum, default_value_t = CorrelateMethod::Auto)]
    method: CorrelateMethod,
    #[arg(long)]
    tol: Option<f64>,
    /// CSV output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dump_config: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    model: String,
    /// `dt,T`.
    #[arg(long, value_parser = parse_grid)]
    grid: GridConfig,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    n_traj: usize,
    #[arg(long, default_value = "kraus")]
    scheme: Scheme,
    /// Output directory for `record_NNNNNN.csv` files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    dump_config: bool,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Model file or `zoo:NAME`; not used with --zoo-suite.
    #[arg(long, required_unless_present = "zoo_suite")]
    model: Option<String>,
    /// Run the built-in suite over every zoo model.
    #[arg(long)]
    zoo_suite: bool,
    /// Window of a single request; repeat for more legs.
    #[arg(long = "window", value_parser = parse_window)]
    windows: Vec<WindowFilter>,
    /// A request as windows joined by `+`, e.g. `d0:0,1+d0:0.5,1.5`.
    #[arg(long = "request", value_parser = parse_request)]
    requests: Vec<Vec<WindowFilter>>,
    /// `dt,T` (defaults to dt = 0.001 up to the end of the last window).
    #[arg(long, value_parser = parse_grid)]
    grid: Option<GridConfig>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_N_TRAJ)]
    n_traj: usize,
    #[arg(long, default_value = "kraus")]
    scheme: Scheme,
    #[arg(long, default_value_t = DEFAULT_Z_THRESHOLD)]
    z_threshold: f64,
    /// Worker threads (falls back to SME_CORRELATE_THREADS).
    #[arg(long)]
    workers: Option<usize>,
    /// JSON report file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scale every efficiency on the analytic side only.
    #[arg(long, hide = true)]
    corrupt_eta: Option<f64>,
    #[arg(long)]
    dump_config: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CorrelateMethod {
    /// Sharp insertion for points, the block ODE for windows.
    Auto,
    /// Nested adaptive quadrature (one or two Rect windows).
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub dt: f64,
    pub horizon: f64,
}

impl GridConfig {
    pub fn time_grid(&self) -> crate::Result<TimeGrid> {
        Ok(TimeGrid::covering(self.dt, self.horizon)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelateConfig {
    pub model: String,
    #[serde(default)]
    pub sharp: Vec<SharpPoint>,
    #[serde(default)]
    pub windows: Vec<WindowFilter>,
    pub horizon: Option<f64>,
    pub method: CorrelateMethod,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub model: String,
    pub grid: GridConfig,
    pub seed: u64,
    pub n_traj: usize,
    pub scheme: Scheme,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub model: Option<String>,
    #[serde(default)]
    pub zoo_suite: bool,
    #[serde(default)]
    pub requests: Vec<ComparisonRequest>,
    pub grid: Option<GridConfig>,
    pub seed: u64,
    pub n_traj: usize,
    pub scheme: Scheme,
    pub z_threshold: f64,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub corrupt_eta: Option<f64>,
}

/// A complete, replayable invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum RunConfig {
    Correlate(CorrelateConfig),
    Simulate(SimulateConfig),
    Compare(CompareConfig),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Module(crate::Error),
    ComparisonFailed { failed: usize, total: usize },
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Module(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Module(_) => EXIT_MODULE_FAILURE,
            CliError::ComparisonFailed { .. } => EXIT_COMPARISON_FAILED,
        }
    }

    /// Structured record printed on stderr.
    pub fn to_json(&self) -> String {
        let (module, kind, message) = match self {
            CliError::Usage(m) => ("cli", "usage", m.clone()),
            CliError::Module(e) => (e.module(), e.kind(), e.to_string()),
            CliError::ComparisonFailed { failed, total } => (
                "estimator",
                "comparison_failed",
                format!("{failed} of {total} requests outside the z threshold"),
            ),
        };
        serde_json::json!({ "error": { "module": module, "kind": kind, "message": message } }).to_string()
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_f64(s: &str, what: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("{what}: '{s}' is not a number"))?;
    if !v.is_finite() {
        return Err(format!("{what}: '{s}' is not finite"));
    }
    Ok(v)
}

/// `detector@time`.
pub fn parse_sharp(s: &str) -> Result<SharpPoint, String> {
    let (det, t) = s
        .rsplit_once('@')
        .ok_or_else(|| format!("sharp point '{s}' must look like detector@time"))?;
    if det.is_empty() {
        return Err(format!("sharp point '{s}' has no detector"));
    }
    Ok(SharpPoint::new(det, parse_f64(t, "time")?))
}

/// `detector:start,end`.
pub fn parse_window(s: &str) -> Result<WindowFilter, String> {
    let (det, range) = s
        .rsplit_once(':')
        .ok_or_else(|| format!("window '{s}' must look like detector:start,end"))?;
    let (a, b) = range
        .split_once(',')
        .ok_or_else(|| format!("window '{s}' must look like detector:start,end"))?;
    if det.is_empty() {
        return Err(format!("window '{s}' has no detector"));
    }
    let w = WindowFilter::rect(det, parse_f64(a, "start")?, parse_f64(b, "end")?);
    w.validate().map_err(|e| e.to_string())?;
    Ok(w)
}

/// Windows joined by `+`.
pub fn parse_request(s: &str) -> Result<Vec<WindowFilter>, String> {
    s.split('+').map(parse_window).collect()
}

/// `dt,T`.
pub fn parse_grid(s: &str) -> Result<GridConfig, String> {
    let (dt, t) = s.split_once(',').ok_or_else(|| format!("grid '{s}' must look like dt,T"))?;
    let g = GridConfig {
        dt: parse_f64(dt, "dt")?,
        horizon: parse_f64(t, "T")?,
    };
    if !(g.dt > 0.0 && g.horizon > 0.0) {
        return Err(format!("grid '{s}' needs dt > 0 and T > 0"));
    }
    Ok(g)
}

/// A model file path, or `zoo:NAME`.
pub fn load_model(reference: &str) -> crate::Result<(QuantumModel, DensityMatrix)> {
    match reference.strip_prefix("zoo:") {
        Some(name) => Ok(model_zoo(name)?),
        None => load_model_file(Path::new(reference)),
    }
}

fn request_id(windows: &[WindowFilter]) -> String {
    windows
        .iter()
        .map(|w| {
            let (a, b) = w.support();
            format!("{}:{a},{b}", w.detector)
        })
        .collect::<Vec<_>>()
        .join("+")
}

fn write_output(path: Option<&Path>, contents: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, contents).map_err(|source| {
            CliError::Module(crate::Error::Io {
                path: p.to_path_buf(),
                source,
            })
        }),
        None => stdout
            .write_all(contents.as_bytes())
            .map_err(|e| usage(format!("cannot write to stdout: {e}"))),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| {
        CliError::Module(crate::Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

impl CorrelateArgs {
    fn into_config(self) -> Result<CorrelateConfig, CliError> {
        let cfg = CorrelateConfig {
            model: self.model,
            sharp: self.sharp,
            windows: self.windows,
            horizon: self.horizon,
            method: self.method,
            tol: self.tol,
            out: self.out,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl CorrelateConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        match (self.sharp.is_empty(), self.windows.is_empty()) {
            (true, true) => return Err(usage("give --sharp points or --window filters")),
            (false, false) => return Err(usage("--sharp and --window cannot be mixed")),
            _ => {}
        }
        if !self.sharp.is_empty() && self.method == CorrelateMethod::Quadrature {
            return Err(usage("--method quadrature needs --window filters"));
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(usage(format!("--tol must be positive, got {t}")));
            }
        }
        Ok(())
    }

    fn analytic_config(&self) -> AnalyticConfig {
        let mut cfg = AnalyticConfig::default();
        if let Some(t) = self.tol {
            cfg.krylov.tol = t;
            cfg.rk.rtol = t;
            cfg.rk.atol = t * 1e-3;
        }
        cfg
    }

    pub fn execute(&self, stdout: &mut dyn Write) -> Result<CorrelationResult, CliError> {
        self.validate()?;
        let (m, rho0) = load_model(&self.model)?;
        let cfg = self.analytic_config();
        let (id, result) = if !self.sharp.is_empty() {
            let id = self
                .sharp
                .iter()
                .map(|p| format!("{}@{}", p.detector, p.time))
                .collect::<Vec<_>>()
                .join("+");
            (id, sharp_correlation_with(&m, &rho0, &self.sharp, &cfg)?)
        } else {
            let result = match self.method {
                CorrelateMethod::Auto => {
                    let end = self.windows.iter().map(|w| w.support().1).fold(0.0, f64::max);
                    let horizon = self.horizon.unwrap_or(end);
                    filtered_correlation_with(&m, &rho0, &self.windows, horizon, &cfg)?
                }
                CorrelateMethod::Quadrature => {
                    let tol = self.tol.unwrap_or(1e-9);
                    quadrature_correlation_with(&m, &rho0, &self.windows, tol, 2_000_000, &cfg)?
                }
            };
            (request_id(&self.windows), result)
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        let row = [
            id.clone(),
            result.method.to_string(),
            result.order.to_string(),
            format!("{}", result.value),
            result.diagnostics.steps.to_string(),
            format!("{}", result.diagnostics.tolerance),
        ];
        w.write_record(["id", "method", "order", "value", "steps", "tolerance"])
            .and_then(|_| w.write_record(&row))
            .map_err(|e| usage(format!("csv: {e}")))?;
        let csv = String::from_utf8(w.into_inner().map_err(|e| usage(format!("csv: {e}")))?)
            .expect("csv output is utf-8");
        write_output(self.out.as_deref(), &csv, stdout)?;
        if let Some(p) = &self.out {
            let _ = writeln!(stdout, "{id} = {} ({}) -> {}", result.value, result.method, p.display());
        }
        Ok(result)
    }
}

impl SimulateArgs {
    fn into_config(self) -> Result<SimulateConfig, CliError> {
        let cfg = SimulateConfig {
            model: self.model,
            grid: self.grid,
            seed: self.seed,
            n_traj: self.n_traj,
            scheme: self.scheme,
            out: self.out,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl SimulateConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.n_traj == 0 {
            return Err(usage("--n-traj must be at least 1"));
        }
        Ok(())
    }

    /// Path of the record file of trajectory `i`.
    pub fn record_path(&self, i: usize) -> PathBuf {
        self.out.join(format!("record_{i:06}.csv"))
    }

    pub fn execute(&self, stdout: &mut dyn Write) -> Result<Vec<PathBuf>, CliError> {
        self.validate()?;
        let (m, rho0) = load_model(&self.model)?;
        let sim = Simulator::new(&m, self.grid.time_grid()?, self.scheme)?;
        std::fs::create_dir_all(&self.out).map_err(io_err(&self.out))?;
        let mut written = Vec::with_capacity(self.n_traj);
        for i in 0..self.n_traj {
            let traj = sim.run(&rho0, self.seed, i as u64, &SimulationOptions::default())?;
            let path = self.record_path(i);
            std::fs::write(&path, traj.record.to_csv_string()).map_err(io_err(&path))?;
            written.push(path);
        }
        let _ = writeln!(stdout, "wrote {} records to {}", written.len(), self.out.display());
        Ok(written)
    }
}

impl CompareArgs {
    fn into_config(self) -> Result<CompareConfig, CliError> {
        let mut requests: Vec<ComparisonRequest> = Vec::new();
        if !self.windows.is_empty() {
            requests.push(ComparisonRequest::new(request_id(&self.windows), self.windows));
        }
        for ws in self.requests {
            requests.push(ComparisonRequest::new(request_id(&ws), ws));
        }
        let cfg = CompareConfig {
            model: self.model,
            zoo_suite: self.zoo_suite,
            requests,
            grid: self.grid,
            seed: self.seed,
            n_traj: self.n_traj,
            scheme: self.scheme,
            z_threshold: self.z_threshold,
            workers: self.workers,
            out: self.out,
            corrupt_eta: self.corrupt_eta,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl CompareConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.zoo_suite {
            if self.model.is_some() || !self.requests.is_empty() {
                return Err(usage("--zoo-suite takes no --model, --window or --request"));
            }
        } else {
            if self.model.is_none() {
                return Err(usage("--model is required without --zoo-suite"));
            }
            if self.requests.is_empty() {
                return Err(usage("no comparison requests; give --window or --request"));
            }
        }
        if self.n_traj < 2 {
            return Err(usage(format!("--n-traj must be at least 2, got {}", self.n_traj)));
        }
        if !(self.z_threshold > 0.0) {
            return Err(usage(format!("--z-threshold must be positive, got {}", self.z_threshold)));
        }
        Ok(())
    }

    fn options(&self) -> ComparisonOptions {
        ComparisonOptions {
            z_threshold: self.z_threshold,
            workers: self.workers,
            corrupt_efficiency: self.corrupt_eta,
            ..Default::default()
        }
    }

    pub fn execute(&self, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<Vec<ComparisonReport>, CliError> {
        self.validate()?;
        let opts = self.options();
        let reports = if self.zoo_suite {
            let dt = self.grid.map_or(1e-3, |g| g.dt);
            run_zoo_suite(self.n_traj, dt, self.seed, self.scheme, &opts)?
        } else {
            let reference = self.model.as_deref().expect("validated");
            let (model, rho0) = load_model(reference)?;
            let grid = match self.grid {
                Some(g) => g,
                None => GridConfig {
                    dt: 1e-3,
                    horizon: self
                        .requests
                        .iter()
                        .flat_map(|r| r.windows.iter().map(|w| w.support().1))
                        .fold(0.0, f64::max)
                        .max(1e-3),
                },
            };
            let spec = EnsembleSpec {
                model,
                rho0,
                grid: grid.time_grid()?,
                n_traj: self.n_traj,
                master_seed: self.seed,
                scheme: self.scheme,
            };
            vec![run_comparison_labeled(reference, &spec, &self.requests, &opts)?]
        };
        for r in &reports {
            let _ = write!(stderr, "{}", r.to_table());
        }
        let json = if self.zoo_suite {
            serde_json::to_string_pretty(&reports).expect("reports serialize")
        } else {
            reports[0].to_json()
        };
        write_output(self.out.as_deref(), &(json + "\n"), stdout)?;
        let total: usize = reports.iter().map(|r| r.summary.n_requests).sum();
        let passed: usize = reports.iter().map(|r| r.summary.n_passed).sum();
        if passed < total {
            return Err(CliError::ComparisonFailed {
                failed: total - passed,
                total,
            });
        }
        Ok(reports)
    }
}

impl RunConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, CliError> {
        serde_json::from_str(s).map_err(|e| usage(format!("invalid config: {e}")))
    }

    pub fn execute(&self, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
        match self {
            RunConfig::Correlate(c) => c.execute(stdout).map(|_| ()),
            RunConfig::Simulate(c) => c.execute(stdout).map(|_| ()),
            RunConfig::Compare(c) => c.execute(stdout, stderr).map(|_| ()),
        }
    }
}

fn zoo(name: Option<String>, out: Option<PathBuf>, stdout: &mut dyn Write) -> Result<(), CliError> {
    match name {
        None => {
            for n in ZOO_NAMES {
                let _ = writeln!(stdout, "{n}");
            }
            Ok(())
        }
        Some(n) => {
            let (m, rho0) = model_zoo(&n).map_err(crate::Error::from)?;
            let file = ModelFile::from_model(&m, &rho0, Some(format!("zoo model {n}")));
            write_output(out.as_deref(), &(file.to_json_string() + "\n"), stdout)
        }
    }
}

/// Parse `args` (including the program name) and run, writing to the given
/// streams.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return Ok(());
            }
            return Err(usage(e.to_string().trim().to_string()));
        }
    };
    let (config, dump) = match cli.command {
        Command::Correlate(a) => {
            let dump = a.dump_config;
            (RunConfig::Correlate(a.into_config()?), dump)
        }
        Command::Simulate(a) => {
            let dump = a.dump_config;
            (RunConfig::Simulate(a.into_config()?), dump)
        }
        Command::Compare(a) => {
            let dump = a.dump_config;
            (RunConfig::Compare(a.into_config()?), dump)
        }
        Command::Run { config } => {
            let text = std::fs::read_to_string(&config).map_err(io_err(&config))?;
            (RunConfig::from_json(&text)?, false)
        }
        Command::Zoo { name, out } => return zoo(name, out, stdout),
    };
    if dump {
        let _ = writeln!(stdout, "{}", config.to_json());
        return Ok(());
    }
    config.execute(stdout, stderr)
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut stdout = std::io::stdout().lock();
    let mut stderr = std::io::stderr();
    match run_with(std::env::args_os(), &mut stdout, &mut stderr) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = stdout.flush();
            let _ = writeln!(stderr, "{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (Result<(), CliError>, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut full = vec!["sme-correlate"];
        full.extend_from_slice(args);
        let r = run_with(full, &mut out, &mut err);
        (r, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    fn csv_row(out: &str) -> csv::StringRecord {
        csv::Reader::from_reader(out.as_bytes()).records().next().unwrap().unwrap()
    }

    #[test]
    fn parses_leg_syntax() {
        assert_eq!(parse_sharp("d0@1.5").unwrap(), SharpPoint::new("d0", 1.5));
        assert_eq!(parse_window("a:b:0,1").unwrap(), WindowFilter::rect("a:b", 0.0, 1.0));
        assert!(parse_sharp("d0").is_err());
        assert!(parse_window("d0:1,0").is_err());
        assert!(parse_window("d0:0;1").is_err());
        assert_eq!(parse_grid("0.01,2").unwrap(), GridConfig { dt: 0.01, horizon: 2.0 });
        assert!(parse_grid("0,2").is_err());
        assert_eq!(parse_request("d0:0,1+d0:2,3").unwrap().len(), 2);
    }

    #[test]
    fn correlate_sharp_decay() {
        let (r, out, _) = run(&["correlate", "--model", "zoo:decay_photodetect", "--sharp", "d0@1.0"]);
        r.unwrap();
        let row = csv_row(&out);
        let value: f64 = row[3].parse().unwrap();
        assert!((value - (0.05 + 0.8 * (-1.0f64).exp())).abs() < 1e-9);
        assert_eq!((&row[0], &row[1], &row[2]), ("d0@1", "sharp_insertion", "1"));
    }

    #[test]
    fn correlate_overlap_windows() {
        let (r, out, _) = run(&[
            "correlate", "--model", "zoo:pure_noise", "--window", "d0:0,1", "--window", "d0:0.5,1.5",
        ]);
        r.unwrap();
        let row = csv_row(&out);
        assert_eq!(&row[0], "d0:0,1+d0:0.5,1.5");
        let value: f64 = row[3].parse().unwrap();
        assert!((value - 0.5).abs() < 1e-10);
    }

    #[test]
    fn usage_errors() {
        let (r, _, _) = run(&["correlate", "--model", "zoo:pure_noise"]);
        assert_eq!(r.unwrap_err().exit_code(), EXIT_USAGE);
        let (r, _, _) = run(&["simulate", "--model", "zoo:pure_noise", "--grid", "0.1,1", "--seed", "1", "--n-traj", "0", "--out", "x"]);
        assert_eq!(r.unwrap_err().exit_code(), EXIT_USAGE);
        let (r, _, _) = run(&["compare", "--model", "zoo:pure_noise"]);
        let e = r.unwrap_err();
        assert_eq!(e.exit_code(), EXIT_USAGE);
        assert!(e.to_json().contains("\"module\":\"cli\""));
        let (r, _, _) = run(&["frobnicate"]);
        assert_eq!(r.unwrap_err().exit_code(), EXIT_USAGE);
    }

    #[test]
    fn module_errors_are_structured() {
        let (r, _, _) = run(&["correlate", "--model", "/nonexistent/model.json", "--sharp", "d0@1"]);
        let e = r.unwrap_err();
        assert_eq!(e.exit_code(), EXIT_MODULE_FAILURE);
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["error"]["module"], "io");
        assert!(v["error"]["message"].as_str().unwrap().contains("/nonexistent/model.json"));

        let (r, _, _) = run(&["correlate", "--model", "zoo:pure_noise", "--sharp", "d0@1", "--sharp", "d0@1"]);
        let v: serde_json::Value = serde_json::from_str(&r.unwrap_err().to_json()).unwrap();
        assert_eq!(v["error"]["module"], "analytic");
        assert_eq!(v["error"]["kind"], "duplicate_times");
    }

    #[test]
    fn dump_config_round_trips() {
        let (r, out, _) = run(&[
            "compare", "--model", "zoo:pure_noise", "--request", "d0:0,1+d0:0.5,1.5", "--n-traj", "50", "--dump-config",
        ]);
        r.unwrap();
        let cfg = RunConfig::from_json(&out).unwrap();
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        match cfg {
            RunConfig::Compare(c) => {
                assert_eq!(c.n_traj, 50);
                assert_eq!(c.requests[0].windows.len(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zoo_listing_and_export() {
        let (r, out, _) = run(&["zoo"]);
        r.unwrap();
        assert_eq!(out.lines().count(), ZOO_NAMES.len());
        let (r, out, _) = run(&["zoo", "decay_photodetect"]);
        r.unwrap();
        let (m, rho) = ModelFile::from_json_str(&out).unwrap().to_model().unwrap();
        let (m0, rho0) = model_zoo("decay_photodetect").unwrap();
        assert_eq!(m.dim, m0.dim);
        assert_eq!(rho.matrix(), rho0.matrix());
    }
}
