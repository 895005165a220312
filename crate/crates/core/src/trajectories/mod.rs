//! Quantum trajectories and measurement records.
//!
//! Two discretizations of the same stochastic master equation are provided:
//!
//! * [`Scheme::KrausMap`] applies the partial Kraus map of the sampled
//!   outcome and renormalizes. It is a valid quantum instrument at every
//!   step and is the reference scheme.
//! * [`Scheme::EulerIto`] integrates the jump/diffusive SME directly with
//!   Bernoulli counts and Gaussian Wiener increments.
//!
//! Each trajectory owns a ChaCha8 stream selected by `(seed, stream)`, so
//! ensembles can be run in any order or in parallel and still reproduce
//! bit-for-bit.

mod kernels;

use std::io::Write;
use std::sync::atomic::{AtomicBool, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, TrajectoryError};
use crate::linalg::{expm_action, hermitian_eigenvalues, identity, vectorize, ComplexMatrix, KrylovConfig, C64, I, ZERO};
use crate::model::{DensityMatrix, DetectorKind, QuantumModel};
use crate::superops::lindbladian;

use kernels::{
    adjoint_into, from_array, hermitize_normalize, mul_into, negative_part, sandwich_add, to_array, trace_prod,
};

/// Per-step click probability above which the discrete schemes lose accuracy.
pub const JUMP_PROBABILITY_WARNING: f64 = 0.1;
/// A state whose smallest eigenvalue falls below this after a step aborts the
/// trajectory; smaller excursions are clipped.
pub const NEGATIVE_EIGENVALUE_ABORT: f64 = -1e-6;

static WARNED_LARGE_STEP: AtomicBool = AtomicBool::new(false);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, n_steps: usize) -> Result<Self, TrajectoryError> {
        if !t0.is_finite() {
            return Err(TrajectoryError::InvalidGrid(format!("t0 must be finite, got {t0}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(TrajectoryError::InvalidGrid(format!("dt must be positive, got {dt}")));
        }
        if n_steps == 0 {
            return Err(TrajectoryError::InvalidGrid("n_steps must be at least 1".into()));
        }
        Ok(Self { t0, dt, n_steps })
    }

    /// Grid starting at 0 that covers `[0, horizon]` with step `dt`.
    pub fn covering(dt: f64, horizon: f64) -> Result<Self, TrajectoryError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(TrajectoryError::InvalidGrid(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let n = (horizon / dt - 1e-9).ceil().max(1.0);
        Self::new(0.0, dt, n as usize)
    }

    /// Left edge of step `k`.
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.time(self.n_steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    KrausMap,
    EulerIto,
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "kraus" | "kraus_map" => Ok(Scheme::KrausMap),
            "euler" | "euler_ito" => Ok(Scheme::EulerIto),
            other => Err(format!("unknown scheme '{other}' (expected kraus or euler)")),
        }
    }
}

/// Signal increments `dY` of every detector over a grid. Step `k` covers
/// `[grid.time(k), grid.time(k + 1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub grid: TimeGrid,
    pub labels: Vec<String>,
    pub kinds: Vec<DetectorKind>,
    /// `increments[detector][step]`.
    pub increments: Vec<Vec<f64>>,
}

impl MeasurementRecord {
    pub fn zeros(model: &QuantumModel, grid: TimeGrid) -> Self {
        Self {
            grid,
            labels: model.detectors.iter().map(|d| d.label.clone()).collect(),
            kinds: model.detectors.iter().map(|d| d.kind).collect(),
            increments: vec![vec![0.0; grid.n_steps]; model.detectors.len()],
        }
    }

    pub fn n_detectors(&self) -> usize {
        self.labels.len()
    }

    pub fn detector_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Number of clicks (or the integrated signal, for diffusive detectors).
    pub fn total(&self, detector: usize) -> f64 {
        self.increments[detector].iter().sum()
    }

    /// Write CSV with columns `step,time,detector_label,increment`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "time", "detector_label", "increment"])?;
        for k in 0..self.grid.n_steps {
            let step = k.to_string();
            let time = format!("{}", self.grid.time(k));
            for (label, inc) in self.labels.iter().zip(&self.increments) {
                w.write_record([step.as_str(), time.as_str(), label.as_str(), &format!("{}", inc[k])])?;
            }
        }
        w.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    /// States at `snapshot_steps`, clipped to be positive semidefinite.
    pub states: Vec<DensityMatrix>,
    pub snapshot_steps: Vec<usize>,
    pub final_state: DensityMatrix,
    pub record: MeasurementRecord,
    pub seed: u64,
    pub stream: u64,
    /// Largest per-step click probability encountered.
    pub max_step_probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimulationOptions {
    /// Store a snapshot every `stride` steps (including step 0 and the end).
    pub snapshot_stride: Option<usize>,
}

/// The ChaCha8 stream for trajectory `stream` of an ensemble seeded by `seed`.
pub fn trajectory_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct JumpOps {
    v: Vec<C64>,
    v_adj: Vec<C64>,
    vdv: Vec<C64>,
    eta: f64,
    theta: f64,
    index: usize,
}

struct DiffOps {
    l: Vec<C64>,
    l_adj: Vec<C64>,
    ldl: Vec<C64>,
    l_plus: Vec<C64>,
    eta: f64,
    index: usize,
}

/// Precomputed step operators for one model and grid; shareable across
/// threads.
pub struct Simulator {
    model: QuantumModel,
    grid: TimeGrid,
    scheme: Scheme,
    d: usize,
    /// `M₀ = I − iH dt − ½ Σ_k A_k†A_k dt` over all detectors.
    m0: Vec<C64>,
    m0dm0: Vec<C64>,
    /// `G = −iH − ½ Σ_k A_k†A_k`, so that `𝓛ρ = Gρ + ρG† + Σ_k A_kρA_k†`.
    g: Vec<C64>,
    g_adj: Vec<C64>,
    jumps: Vec<JumpOps>,
    diffs: Vec<DiffOps>,
}

struct Workspace {
    rho: Vec<C64>,
    next: Vec<C64>,
    tmp: Vec<C64>,
    tmp2: Vec<C64>,
    mr: Vec<C64>,
    mr_adj: Vec<C64>,
    probs: Vec<f64>,
    noise: Vec<f64>,
    results: Vec<f64>,
}

impl Simulator {
    pub fn new(model: &QuantumModel, grid: TimeGrid, scheme: Scheme) -> Result<Self> {
        let model = model.clone().validated()?;
        let d = model.dim;
        let dt = grid.dt;
        let mut sum_ada = ComplexMatrix::zeros((d, d));
        let mut jumps = Vec::new();
        let mut diffs = Vec::new();
        for (index, det) in model.detectors.iter().enumerate() {
            let a = &det.operator;
            let a_adj = crate::linalg::dagger(a);
            let ada = a_adj.dot(a);
            sum_ada = sum_ada + &ada;
            match det.kind {
                DetectorKind::Jump => jumps.push(JumpOps {
                    v: from_array(a),
                    v_adj: from_array(&a_adj),
                    vdv: from_array(&ada),
                    eta: det.efficiency,
                    theta: det.dark_rate,
                    index,
                }),
                DetectorKind::Diffusive => diffs.push(DiffOps {
                    l: from_array(a),
                    l_adj: from_array(&a_adj),
                    ldl: from_array(&ada),
                    l_plus: from_array(&(a + &a_adj)),
                    eta: det.efficiency,
                    index,
                }),
            }
        }
        let g = model.hamiltonian.mapv(|z| -I * z) - sum_ada * C64::new(0.5, 0.0);
        let m0 = identity(d) + &g * C64::new(dt, 0.0);
        let m0dm0 = crate::linalg::dagger(&m0).dot(&m0);
        Ok(Self {
            d,
            grid,
            scheme,
            m0: from_array(&m0),
            m0dm0: from_array(&m0dm0),
            g_adj: from_array(&crate::linalg::dagger(&g)),
            g: from_array(&g),
            jumps,
            diffs,
            model,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn model(&self) -> &QuantumModel {
        &self.model
    }

    fn workspace(&self, rho0: &DensityMatrix) -> Workspace {
        let n = self.d * self.d;
        Workspace {
            rho: from_array(rho0.matrix()),
            next: vec![ZERO; n],
            tmp: vec![ZERO; n],
            tmp2: vec![ZERO; n],
            mr: vec![ZERO; n],
            mr_adj: vec![ZERO; n],
            probs: vec![0.0; self.jumps.len()],
            noise: vec![0.0; self.diffs.len()],
            results: vec![0.0; self.model.detectors.len()],
        }
    }

    /// Run one trajectory on stream `stream` of master seed `seed`.
    pub fn run(
        &self,
        rho0: &DensityMatrix,
        seed: u64,
        stream: u64,
        opts: &SimulationOptions,
    ) -> Result<Trajectory> {
        let mut record = MeasurementRecord::zeros(&self.model, self.grid);
        let mut states = Vec::new();
        let mut snapshot_steps = Vec::new();
        let final_state = self.run_into(rho0, seed, stream, opts, &mut record, &mut |k, s| {
            snapshot_steps.push(k);
            states.push(s);
        })?;
        Ok(Trajectory {
            grid: self.grid,
            states,
            snapshot_steps,
            final_state: final_state.0,
            record,
            seed,
            stream,
            max_step_probability: final_state.1,
        })
    }

    /// Run one trajectory writing increments into `record`; snapshots are
    /// passed to `on_snapshot`. Returns the final state and the largest
    /// per-step click probability.
    pub fn run_into(
        &self,
        rho0: &DensityMatrix,
        seed: u64,
        stream: u64,
        opts: &SimulationOptions,
        record: &mut MeasurementRecord,
        on_snapshot: &mut dyn FnMut(usize, DensityMatrix),
    ) -> Result<(DensityMatrix, f64)> {
        if rho0.dim() != self.d {
            return Err(crate::error::ModelError::DimensionMismatch {
                context: "initial state".into(),
                left: self.d,
                right: rho0.dim(),
            }
            .into());
        }
        if record.grid != self.grid || record.n_detectors() != self.model.detectors.len() {
            return Err(TrajectoryError::InvalidGrid("record does not match simulator grid".into()).into());
        }
        let mut rng = trajectory_rng(seed, stream);
        let mut ws = self.workspace(rho0);
        let mut max_p: f64 = 0.0;
        let stride = opts.snapshot_stride.filter(|&s| s > 0);
        if stride.is_some() {
            on_snapshot(0, self.snapshot(&ws.rho, 0)?);
        }
        for k in 0..self.grid.n_steps {
            let p = match self.scheme {
                Scheme::KrausMap => self.kraus_step(&mut ws, &mut rng),
                Scheme::EulerIto => self.euler_step(&mut ws, &mut rng),
            };
            max_p = max_p.max(p);
            for (inc, r) in record.increments.iter_mut().zip(&ws.results) {
                inc[k] = *r;
            }
            let tr = hermitize_normalize(&mut ws.rho, self.d);
            if !(tr.is_finite() && tr > 0.0) || ws.rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(TrajectoryError::NonFinite { step: k }.into());
            }
            if self.scheme == Scheme::EulerIto {
                let neg = negative_part(&ws.rho, self.d, &mut ws.tmp);
                if neg < 0.0 {
                    if neg < NEGATIVE_EIGENVALUE_ABORT {
                        return Err(TrajectoryError::NegativeState {
                            step: k + 1,
                            min_eigenvalue: neg,
                        }
                        .into());
                    }
                    clip_negative(&mut ws.rho, self.d)?;
                }
            }
            if let Some(s) = stride {
                if (k + 1) % s == 0 || k + 1 == self.grid.n_steps {
                    on_snapshot(k + 1, self.snapshot(&ws.rho, k + 1)?);
                }
            }
        }
        if max_p > JUMP_PROBABILITY_WARNING && !WARNED_LARGE_STEP.swap(true, Ordering::Relaxed) {
            log::warn!(
                "per-step click probability reached {max_p:.3} (> {JUMP_PROBABILITY_WARNING}); reduce dt"
            );
        }
        let final_state = self.snapshot(&ws.rho, self.grid.n_steps)?;
        Ok((final_state, max_p))
    }

    fn snapshot(&self, rho: &[C64], step: usize) -> Result<DensityMatrix> {
        let m = to_array(rho, self.d);
        let min_ev = hermitian_eigenvalues(&m)[0];
        if min_ev < NEGATIVE_EIGENVALUE_ABORT {
            return Err(TrajectoryError::NegativeState {
                step,
                min_eigenvalue: min_ev,
            }
            .into());
        }
        if min_ev >= 0.0 {
            return Ok(DensityMatrix::from_trusted(m));
        }
        Ok(DensityMatrix::project(&m)?.0)
    }

    /// Click probabilities of one Kraus step, marginalized over the
    /// diffusive outcomes. Returns their sum.
    fn jump_probabilities(&self, rho: &[C64], probs: &mut [f64]) -> f64 {
        let d = self.d;
        let dt = self.grid.dt;
        if self.jumps.is_empty() {
            return 0.0;
        }
        let mut no_click_weight = trace_prod(&self.m0dm0, rho, d).re;
        for df in &self.diffs {
            no_click_weight += df.eta * dt * trace_prod(&df.ldl, rho, d).re;
        }
        let mut total = 0.0;
        for (p, j) in probs.iter_mut().zip(&self.jumps) {
            *p = j.theta * dt * no_click_weight + j.eta * dt * trace_prod(&j.vdv, rho, d).re;
            total += *p;
        }
        total
    }

    fn kraus_step(&self, ws: &mut Workspace, rng: &mut ChaCha8Rng) -> f64 {
        let d = self.d;
        let dt = self.grid.dt;
        let total = self.jump_probabilities(&ws.rho, &mut ws.probs);
        let mut clicked = None;
        if !self.jumps.is_empty() {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, p) in ws.probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    clicked = Some(i);
                    break;
                }
            }
            for (i, j) in self.jumps.iter().enumerate() {
                ws.results[j.index] = if clicked == Some(i) { 1.0 } else { 0.0 };
            }
        }

        ws.mr.copy_from_slice(&self.m0);
        let sqrt_dt = dt.sqrt();
        for df in &self.diffs {
            let mean = df.eta.sqrt() * trace_prod(&df.l_plus, &ws.rho, d).re * dt;
            let z: f64 = rng.sample(StandardNormal);
            let r = mean + sqrt_dt * z;
            ws.results[df.index] = r;
            let c = df.eta.sqrt() * r;
            for (m, l) in ws.mr.iter_mut().zip(&df.l) {
                *m += l * c;
            }
        }
        adjoint_into(&ws.mr, &mut ws.mr_adj, d);

        ws.next.iter_mut().for_each(|z| *z = ZERO);
        match clicked {
            None => {
                let theta_sum: f64 = self.jumps.iter().map(|j| j.theta).sum();
                sandwich_add(1.0 - theta_sum * dt, &ws.mr, &ws.rho, &ws.mr_adj, &mut ws.tmp, &mut ws.next, d);
                for j in &self.jumps {
                    if j.eta < 1.0 {
                        sandwich_add((1.0 - j.eta) * dt, &j.v, &ws.rho, &j.v_adj, &mut ws.tmp, &mut ws.next, d);
                    }
                }
                for df in &self.diffs {
                    if df.eta < 1.0 {
                        sandwich_add((1.0 - df.eta) * dt, &df.l, &ws.rho, &df.l_adj, &mut ws.tmp, &mut ws.next, d);
                    }
                }
            }
            Some(i) => {
                let j = &self.jumps[i];
                if j.theta > 0.0 {
                    sandwich_add(j.theta * dt, &ws.mr, &ws.rho, &ws.mr_adj, &mut ws.tmp, &mut ws.next, d);
                }
                sandwich_add(j.eta * dt, &j.v, &ws.rho, &j.v_adj, &mut ws.tmp, &mut ws.next, d);
            }
        }
        std::mem::swap(&mut ws.rho, &mut ws.next);
        total
    }

    fn euler_step(&self, ws: &mut Workspace, rng: &mut ChaCha8Rng) -> f64 {
        let d = self.d;
        let dt = self.grid.dt;
        let sqrt_dt = dt.sqrt();
        let rho = &ws.rho;
        let next = &mut ws.next;

        let mut max_p: f64 = 0.0;
        let mut clicked = None;
        for (i, j) in self.jumps.iter().enumerate() {
            let rate = j.theta + j.eta * trace_prod(&j.vdv, rho, d).re;
            ws.probs[i] = rate;
            max_p = max_p.max(rate * dt);
            let u: f64 = rng.random();
            let dn = u < rate * dt;
            ws.results[j.index] = if dn { 1.0 } else { 0.0 };
            if dn && clicked.is_none() {
                clicked = Some(i);
            }
        }
        for (w, df) in ws.noise.iter_mut().zip(&self.diffs) {
            let e = trace_prod(&df.l_plus, rho, d).re;
            *w = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
            ws.results[df.index] = df.eta.sqrt() * e * dt + *w;
        }

        next.iter_mut().for_each(|z| *z = ZERO);
        if let Some(i) = clicked {
            // On a click the jump term dominates; the O(dt) drift of that
            // step is dropped so the post-jump state stays positive.
            let j = &self.jumps[i];
            sandwich_add(j.eta, &j.v, rho, &j.v_adj, &mut ws.tmp, next, d);
            for (n, r) in next.iter_mut().zip(rho) {
                *n += r * j.theta;
            }
            std::mem::swap(&mut ws.rho, &mut ws.next);
            return max_p;
        }

        // ρ + 𝓛ρ dt
        mul_into(&self.g, rho, &mut ws.tmp, d);
        mul_into(rho, &self.g_adj, &mut ws.tmp2, d);
        for ((n, r), (a, b)) in next.iter_mut().zip(rho).zip(ws.tmp.iter().zip(&ws.tmp2)) {
            *n = r + (a + b) * dt;
        }
        for j in &self.jumps {
            sandwich_add(dt, &j.v, rho, &j.v_adj, &mut ws.tmp, next, d);
        }
        for df in &self.diffs {
            sandwich_add(dt, &df.l, rho, &df.l_adj, &mut ws.tmp, next, d);
        }
        // −𝒢[V](ρ) rate dt = −(θρ + ηVρV† − rate ρ) dt
        for (j, &rate) in self.jumps.iter().zip(&ws.probs) {
            sandwich_add(-j.eta * dt, &j.v, rho, &j.v_adj, &mut ws.tmp, next, d);
            for (n, r) in next.iter_mut().zip(rho) {
                *n += r * ((rate - j.theta) * dt);
            }
        }
        // √η ℳ[L](ρ) dW with ℳ[L](ρ) = Lρ + ρL† − Tr[(L+L†)ρ]ρ
        for (df, &dw) in self.diffs.iter().zip(&ws.noise) {
            let e = trace_prod(&df.l_plus, rho, d).re;
            mul_into(&df.l, rho, &mut ws.tmp, d);
            mul_into(rho, &df.l_adj, &mut ws.tmp2, d);
            let c = df.eta.sqrt() * dw;
            for ((n, r), (a, b)) in next.iter_mut().zip(rho).zip(ws.tmp.iter().zip(&ws.tmp2)) {
                *n += (a + b - r * e) * c;
            }
        }
        std::mem::swap(&mut ws.rho, &mut ws.next);
        max_p
    }
}

/// Replace `rho` by its projection onto the positive cone, renormalized.
fn clip_negative(rho: &mut [C64], d: usize) -> Result<()> {
    let (state, _) = DensityMatrix::project(&to_array(rho, d))?;
    rho.copy_from_slice(&from_array(state.matrix()));
    Ok(())
}

/// Simulate one trajectory on stream 0 of `seed`.
pub fn simulate(
    m: &QuantumModel,
    rho0: &DensityMatrix,
    grid: TimeGrid,
    seed: u64,
    scheme: Scheme,
) -> Result<Trajectory> {
    Simulator::new(m, grid, scheme)?.run(rho0, seed, 0, &SimulationOptions::default())
}

/// `e^{t𝓛}(ρ₀)`.
pub fn unconditioned_evolve(m: &QuantumModel, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    unconditioned_evolve_with(m, rho0, t, &KrylovConfig::default())
}

pub fn unconditioned_evolve_with(
    m: &QuantumModel,
    rho0: &DensityMatrix,
    t: f64,
    cfg: &KrylovConfig,
) -> Result<DensityMatrix> {
    if t == 0.0 {
        return Ok(rho0.clone());
    }
    let l = lindbladian(m)?;
    let v = vectorize(rho0.matrix()).map_err(Error::from)?;
    let out = expm_action(&l, &v, t, cfg)?;
    let (state, min_ev) = DensityMatrix::project(&crate::linalg::devectorize(&out))?;
    if min_ev < crate::model::STATE_MIN_EIGENVALUE {
        log::debug!("unconditioned state clipped at eigenvalue {min_ev:e}");
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{model_zoo, Detector};
    use crate::superops::kraus_maps_jump;

    fn decay(theta: f64, eta: f64) -> (QuantumModel, DensityMatrix) {
        let (mut m, rho) = model_zoo("decay_photodetect").unwrap();
        m.detectors[0].dark_rate = theta;
        m.detectors[0].efficiency = eta;
        (m, rho)
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(0.0, 0.0, 10).is_err());
        assert!(TimeGrid::new(0.0, 0.1, 0).is_err());
        let g = TimeGrid::covering(1e-3, 2.0).unwrap();
        assert_eq!(g.n_steps, 2000);
        assert!((g.end() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn scheme_parses() {
        assert_eq!("kraus".parse::<Scheme>().unwrap(), Scheme::KrausMap);
        assert_eq!("euler_ito".parse::<Scheme>().unwrap(), Scheme::EulerIto);
        assert!("milstein".parse::<Scheme>().is_err());
    }

    #[test]
    fn fixed_seed_is_bit_exact() {
        for name in crate::model::ZOO_NAMES {
            let (m, rho) = model_zoo(name).unwrap();
            let grid = TimeGrid::new(0.0, 1e-3, 500).unwrap();
            for scheme in [Scheme::KrausMap, Scheme::EulerIto] {
                let a = simulate(&m, &rho, grid, 42, scheme).unwrap();
                let b = simulate(&m, &rho, grid, 42, scheme).unwrap();
                assert_eq!(a, b, "{name}");
            }
        }
    }

    #[test]
    fn streams_are_distinct() {
        let (m, rho) = model_zoo("qubit_homodyne_z").unwrap();
        let grid = TimeGrid::new(0.0, 1e-2, 10).unwrap();
        let sim = Simulator::new(&m, grid, Scheme::KrausMap).unwrap();
        let opts = SimulationOptions::default();
        let a = sim.run(&rho, 1, 0, &opts).unwrap();
        let b = sim.run(&rho, 1, 1, &opts).unwrap();
        assert_ne!(a.record.increments, b.record.increments);
    }

    #[test]
    fn single_emitter_clicks_at_most_once() {
        let (m, rho) = decay(0.0, 0.8);
        let grid = TimeGrid::new(0.0, 1e-3, 5000).unwrap();
        for scheme in [Scheme::KrausMap, Scheme::EulerIto] {
            let sim = Simulator::new(&m, grid, scheme).unwrap();
            for i in 0..1000 {
                let t = sim.run(&rho, 7, i, &SimulationOptions::default()).unwrap();
                assert!(t.record.total(0) <= 1.0);
                assert!(t.record.increments[0].iter().all(|&x| x == 0.0 || x == 1.0));
            }
        }
    }

    #[test]
    fn dark_counts_are_poisson() {
        let theta = 2.0;
        let mut m = decay(theta, 1.0).0;
        m.detectors[0].efficiency = 1e-300;
        let rho = DensityMatrix::basis(2, 0).unwrap();
        let horizon = 1.0;
        let grid = TimeGrid::covering(1e-3, horizon).unwrap();
        let sim = Simulator::new(&m, grid, Scheme::KrausMap).unwrap();
        let n = 10_000;
        let counts: Vec<f64> = (0..n)
            .map(|i| sim.run(&rho, 3, i, &SimulationOptions::default()).unwrap().record.total(0))
            .collect();
        let mean = counts.iter().sum::<f64>() / n as f64;
        let sigma = (theta * horizon / n as f64).sqrt();
        assert!((mean - theta * horizon).abs() < 4.0 * sigma, "mean {mean}");
    }

    #[test]
    fn pure_noise_increments_are_wiener() {
        let (m, rho) = model_zoo("pure_noise").unwrap();
        let dt = 1e-3;
        let grid = TimeGrid::new(0.0, dt, 1000).unwrap();
        for scheme in [Scheme::KrausMap, Scheme::EulerIto] {
            let sim = Simulator::new(&m, grid, scheme).unwrap();
            let mut xs = Vec::new();
            for i in 0..20 {
                xs.extend(sim.run(&rho, 5, i, &SimulationOptions::default()).unwrap().record.increments[0].clone());
            }
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            // Var of the sample variance of a Gaussian is 2σ⁴/(n−1).
            let sigma_var = (2.0 * dt * dt / (n - 1.0)).sqrt();
            assert!((var - dt).abs() < 4.0 * sigma_var, "var {var}");
            assert!(mean.abs() < 4.0 * (dt / n).sqrt());
        }
    }

    #[test]
    fn click_probability_matches_kraus_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (m, _) = model_zoo("driven_qubit_fluorescence").unwrap();
        let dt = 1e-3;
        let grid = TimeGrid::new(0.0, dt, 1).unwrap();
        let sim = Simulator::new(&m, grid, Scheme::KrausMap).unwrap();
        let (_, k1) = kraus_maps_jump(&m.detectors[0], &m.hamiltonian, dt).unwrap();
        for _ in 0..10 {
            let a = ComplexMatrix::from_shape_fn((2, 2), |_| {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let rho = a.dot(&crate::linalg::dagger(&a));
            let rho = &rho / crate::linalg::trace(&rho);
            let mut probs = vec![0.0];
            sim.jump_probabilities(&from_array(&rho), &mut probs);
            let expected = crate::linalg::trace(&k1.apply_to_matrix(&rho)).re;
            assert!((probs[0] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn snapshots_follow_stride() {
        let (m, rho) = model_zoo("driven_qubit_fluorescence").unwrap();
        let grid = TimeGrid::new(0.0, 1e-3, 25).unwrap();
        let sim = Simulator::new(&m, grid, Scheme::EulerIto).unwrap();
        let t = sim
            .run(&rho, 0, 0, &SimulationOptions { snapshot_stride: Some(10) })
            .unwrap();
        assert_eq!(t.snapshot_steps, vec![0, 10, 20, 25]);
        assert_eq!(t.states.last().unwrap(), &t.final_state);
    }

    #[test]
    fn unconditioned_at_zero_and_decay() {
        let (m, rho) = model_zoo("decay_photodetect").unwrap();
        assert_eq!(unconditioned_evolve(&m, &rho, 0.0).unwrap(), rho);
        let out = unconditioned_evolve(&m, &rho, 1.0).unwrap();
        assert!((out.matrix()[[0, 0]].re - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn csv_layout() {
        let m = QuantumModel::new(
            ComplexMatrix::zeros((2, 2)),
            vec![
                Detector::jump("a", ComplexMatrix::zeros((2, 2)), 1.0, 0.0),
                Detector::diffusive("b", ComplexMatrix::zeros((2, 2)), 1.0),
            ],
        )
        .unwrap();
        let mut rec = MeasurementRecord::zeros(&m, TimeGrid::new(0.0, 0.5, 2).unwrap());
        rec.increments[0][1] = 1.0;
        rec.increments[1][0] = -0.25;
        let text = rec.to_csv_string();
        assert_eq!(
            text,
            "step,time,detector_label,increment\n0,0,a,0\n0,0,b,-0.25\n1,0.5,a,1\n1,0.5,b,0\n"
        );
    }
}
