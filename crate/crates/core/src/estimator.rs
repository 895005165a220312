//! Monte Carlo ensembles compared against analytic correlations.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{filtered_correlation_with, AnalyticConfig, EmpiricalEstimate, EmpiricalWindows, WindowFilter};
use crate::error::{EstimatorError, Result};
use crate::model::{model_zoo, DensityMatrix, QuantumModel, ZOO_NAMES};
use crate::trajectories::{MeasurementRecord, Scheme, SimulationOptions, Simulator, TimeGrid};

pub const DEFAULT_Z_THRESHOLD: f64 = 5.0;
pub const DEFAULT_N_TRAJ: usize = 10_000;
pub const THREADS_ENV: &str = "SME_CORRELATE_THREADS";

/// Signal integrated over consecutive bins of equal width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedRecord {
    pub bin_width: f64,
    pub labels: Vec<String>,
    /// `bins[detector][k] = Σ dY` over bin `k`.
    pub bins: Vec<Vec<f64>>,
}

/// Sum increments over bins of width `bin_width`, which must be a whole
/// number of grid steps. A trailing partial bin is dropped with a warning.
pub fn bin_record(rec: &MeasurementRecord, bin_width: f64) -> Result<BinnedRecord> {
    let dt = rec.grid.dt;
    if !(bin_width.is_finite() && bin_width >= dt * (1.0 - 1e-9)) {
        return Err(EstimatorError::InvalidBinWidth(format!("bin width {bin_width} is below the grid step {dt}")).into());
    }
    let ratio = bin_width / dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-9 * ratio {
        return Err(EstimatorError::InvalidBinWidth(format!(
            "bin width {bin_width} is not a multiple of the grid step {dt}"
        ))
        .into());
    }
    let steps = steps as usize;
    let n_bins = rec.grid.n_steps / steps;
    let dropped = rec.grid.n_steps - n_bins * steps;
    if dropped > 0 {
        log::warn!("bin_record: dropping {dropped} trailing steps that do not fill a bin");
    }
    let bins = rec
        .increments
        .iter()
        .map(|inc| inc[..n_bins * steps].chunks(steps).map(|c| c.iter().sum()).collect())
        .collect();
    Ok(BinnedRecord {
        bin_width,
        labels: rec.labels.clone(),
        bins,
    })
}

#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub model: QuantumModel,
    pub rho0: DensityMatrix,
    pub grid: TimeGrid,
    pub n_traj: usize,
    pub master_seed: u64,
    pub scheme: Scheme,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        if self.n_traj < 2 {
            return Err(EstimatorError::InvalidSpec(format!("n_traj must be at least 2, got {}", self.n_traj)));
        }
        if self.rho0.dim() != self.model.dim {
            return Err(EstimatorError::InvalidSpec(format!(
                "initial state has dimension {} but the model has {}",
                self.rho0.dim(),
                self.model.dim
            )));
        }
        Ok(())
    }
}

/// One correlation to estimate: the product of the filtered signals of
/// `windows`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRequest {
    pub id: String,
    pub windows: Vec<WindowFilter>,
}

impl ComparisonRequest {
    pub fn new(id: impl Into<String>, windows: Vec<WindowFilter>) -> Self {
        Self { id: id.into(), windows }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonOptions {
    pub z_threshold: f64,
    /// Worker threads; `None` reads `SME_CORRELATE_THREADS`, then uses all cores.
    pub workers: Option<usize>,
    pub analytic: AnalyticConfig,
    /// Test hook: multiply every detector efficiency by this factor on the
    /// analytic side only.
    pub corrupt_efficiency: Option<f64>,
}

impl Default for ComparisonOptions {
    fn default() -> Self {
        Self {
            z_threshold: DEFAULT_Z_THRESHOLD,
            workers: None,
            analytic: AnalyticConfig::default(),
            corrupt_efficiency: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestReport {
    pub id: String,
    pub order: usize,
    pub analytic: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub z: f64,
    pub pass: bool,
    pub snap_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub n_requests: usize,
    pub n_passed: usize,
    pub max_abs_z: f64,
    pub all_passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub label: String,
    pub n_traj: usize,
    pub dt: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    pub master_seed: u64,
    pub z_threshold: f64,
    pub requests: Vec<RequestReport>,
    pub summary: ReportSummary,
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{}: n_traj={} dt={} T={} scheme={:?} |z|<={}",
            self.label, self.n_traj, self.dt, self.horizon, self.scheme, self.z_threshold
        );
        let _ = writeln!(
            s,
            "{:<28} {:>2} {:>14} {:>14} {:>12} {:>8}  {}",
            "request", "n", "analytic", "estimate", "stderr", "z", "pass"
        );
        for r in &self.requests {
            let _ = writeln!(
                s,
                "{:<28} {:>2} {:>14.6e} {:>14.6e} {:>12.4e} {:>8.3}  {}",
                r.id,
                r.order,
                r.analytic,
                r.estimate,
                r.stderr,
                r.z,
                if r.pass { "ok" } else { "FAIL" }
            );
        }
        let _ = writeln!(
            s,
            "{}/{} passed, max |z| = {:.3}",
            self.summary.n_passed, self.summary.n_requests, self.summary.max_abs_z
        );
        s
    }
}

/// Worker count from the explicit setting, then `SME_CORRELATE_THREADS`,
/// then the number of available cores.
pub fn resolve_workers(workers: Option<usize>) -> usize {
    workers
        .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()))
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn z_score(estimate: f64, analytic: f64, stderr: f64) -> f64 {
    let diff = estimate - analytic;
    if stderr > 0.0 {
        diff / stderr
    } else if diff.abs() <= 1e-12 * analytic.abs().max(1.0) {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

/// Simulate `spec.n_traj` trajectories (trajectory `i` uses stream `i` of
/// the master seed) and compare each request's empirical mean with the
/// analytic filtered correlation over `[0, grid end]`.
pub fn run_comparison(
    spec: &EnsembleSpec,
    requests: &[ComparisonRequest],
    opts: &ComparisonOptions,
) -> Result<ComparisonReport> {
    run_comparison_labeled("comparison", spec, requests, opts)
}

pub fn run_comparison_labeled(
    label: &str,
    spec: &EnsembleSpec,
    requests: &[ComparisonRequest],
    opts: &ComparisonOptions,
) -> Result<ComparisonReport> {
    spec.validate()?;
    if requests.is_empty() {
        return Err(EstimatorError::InvalidSpec("no comparison requests".into()).into());
    }
    let horizon = spec.grid.end();
    let request_err = |id: &str, e: crate::Error| -> crate::Error {
        EstimatorError::Request {
            id: id.to_string(),
            message: e.to_string(),
        }
        .into()
    };

    let mut analytic_model = spec.model.clone();
    if let Some(f) = opts.corrupt_efficiency {
        for d in &mut analytic_model.detectors {
            d.efficiency = (d.efficiency * f).clamp(1e-300, 1.0);
        }
    }
    let labels: Vec<String> = spec.model.detectors.iter().map(|d| d.label.clone()).collect();
    let mut analytic = Vec::with_capacity(requests.len());
    let mut discretized = Vec::with_capacity(requests.len());
    for r in requests {
        let a = filtered_correlation_with(&analytic_model, &spec.rho0, &r.windows, horizon, &opts.analytic)
            .map_err(|e| request_err(&r.id, e))?;
        analytic.push(a.value);
        discretized.push(EmpiricalWindows::new(&r.windows, spec.grid, &labels).map_err(|e| request_err(&r.id, e))?);
    }

    let sim = Simulator::new(&spec.model, spec.grid, spec.scheme)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_workers(opts.workers))
        .build()
        .map_err(|e| EstimatorError::InvalidSpec(format!("cannot start worker pool: {e}")))?;
    let sim_opts = SimulationOptions::default();
    let products: Vec<Vec<f64>> = pool.install(|| {
        (0..spec.n_traj)
            .into_par_iter()
            .map_init(
                || MeasurementRecord::zeros(&spec.model, spec.grid),
                |record, i| {
                    sim.run_into(&spec.rho0, spec.master_seed, i as u64, &sim_opts, record, &mut |_, _| {})?;
                    discretized.iter().map(|w| w.product(record)).collect::<Result<Vec<f64>>>()
                },
            )
            .collect::<Result<Vec<_>>>()
    })?;

    let mut reports = Vec::with_capacity(requests.len());
    for (q, r) in requests.iter().enumerate() {
        let mut samples: Vec<f64> = products.iter().map(|p| p[q]).collect();
        let est = EmpiricalEstimate::from_samples(&mut samples, discretized[q].snap_distance())
            .map_err(|e| request_err(&r.id, e))?;
        let z = z_score(est.estimate, analytic[q], est.stderr);
        reports.push(RequestReport {
            id: r.id.clone(),
            order: r.windows.len(),
            analytic: analytic[q],
            estimate: est.estimate,
            stderr: est.stderr,
            z,
            pass: z.abs() <= opts.z_threshold,
            snap_distance: est.snap_distance,
        });
    }
    let n_passed = reports.iter().filter(|r| r.pass).count();
    let max_abs_z = reports.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    Ok(ComparisonReport {
        label: label.to_string(),
        n_traj: spec.n_traj,
        dt: spec.grid.dt,
        horizon,
        scheme: spec.scheme,
        master_seed: spec.master_seed,
        z_threshold: opts.z_threshold,
        summary: ReportSummary {
            n_requests: reports.len(),
            n_passed,
            max_abs_z,
            all_passed: n_passed == reports.len(),
        },
        requests: reports,
    })
}

/// Horizon of the zoo comparison suite.
pub const ZOO_HORIZON: f64 = 2.0;

/// Comparison requests for a zoo model: 1-point means, same-detector
/// 2-point windows (disjoint and overlapping) and cross-detector products.
pub fn zoo_requests(name: &str) -> Option<Vec<ComparisonRequest>> {
    let r = WindowFilter::rect;
    let q = ComparisonRequest::new;
    let reqs = match name {
        "decay_photodetect" => vec![
            q("d0[0,2]", vec![r("d0", 0.0, 2.0)]),
            q("d0[0,1]*d0[1,2]", vec![r("d0", 0.0, 1.0), r("d0", 1.0, 2.0)]),
            q("d0[0,1.5]*d0[0.5,2]", vec![r("d0", 0.0, 1.5), r("d0", 0.5, 2.0)]),
        ],
        "qubit_homodyne_z" => vec![
            q("d0[0,1]", vec![r("d0", 0.0, 1.0)]),
            q("d0[0,1]*d0[0.5,1.5]", vec![r("d0", 0.0, 1.0), r("d0", 0.5, 1.5)]),
        ],
        "driven_qubit_fluorescence" => vec![
            q("d0[0,2]", vec![r("d0", 0.0, 2.0)]),
            q("d0[0,1]*d0[1,2]", vec![r("d0", 0.0, 1.0), r("d0", 1.0, 2.0)]),
            q("d0[0,1.2]*d0[0.4,2]", vec![r("d0", 0.0, 1.2), r("d0", 0.4, 2.0)]),
        ],
        "cavity_heterodyne" => vec![
            q("x[0,2]", vec![r("x", 0.0, 2.0)]),
            q("y[0,2]", vec![r("y", 0.0, 2.0)]),
            q("x[0,1]*x[0.5,1.5]", vec![r("x", 0.0, 1.0), r("x", 0.5, 1.5)]),
            q("x[0,1]*y[0.5,2]", vec![r("x", 0.0, 1.0), r("y", 0.5, 2.0)]),
        ],
        "mixed_two_detector" => vec![
            q("jump[0,2]", vec![r("jump", 0.0, 2.0)]),
            q("homodyne[0,2]", vec![r("homodyne", 0.0, 2.0)]),
            q("jump[0,1]*homodyne[0.5,1.5]", vec![r("jump", 0.0, 1.0), r("homodyne", 0.5, 1.5)]),
            q("homodyne[0,1]*jump[1,2]", vec![r("homodyne", 0.0, 1.0), r("jump", 1.0, 2.0)]),
        ],
        "pure_noise" => vec![
            q("d0[0,1]", vec![r("d0", 0.0, 1.0)]),
            q("d0[0,1]*d0[0.5,1.5]", vec![r("d0", 0.0, 1.0), r("d0", 0.5, 1.5)]),
        ],
        _ => return None,
    };
    Some(reqs)
}

/// Run the comparison suite on every zoo model.
pub fn run_zoo_suite(
    n_traj: usize,
    dt: f64,
    master_seed: u64,
    scheme: Scheme,
    opts: &ComparisonOptions,
) -> Result<Vec<ComparisonReport>> {
    let grid = TimeGrid::covering(dt, ZOO_HORIZON)?;
    ZOO_NAMES
        .iter()
        .map(|name| {
            let (model, rho0) = model_zoo(name)?;
            let requests = zoo_requests(name).expect("every zoo model has requests");
            let spec = EnsembleSpec {
                model,
                rho0,
                grid,
                n_traj,
                master_seed,
                scheme,
            };
            run_comparison_labeled(name, &spec, &requests, opts)
        })
        .collect()
}
