//! Exact correlation functions of the measurement signal.
//!
//! Sharp correlations alternate Lindblad propagation with the insertion
//! superoperator of each detector and take the trace. Filtered correlations
//! evolve the block of fictitious states `ρ^(S)`, one per subset `S` of the
//! legs, and read off `Tr ρ^(all legs)`.

mod empirical;
mod filtered;
mod quadrature;
mod rk;

use serde::{Deserialize, Serialize};

use crate::error::{AnalyticError, Result};
use crate::linalg::{expm_action, vectorize, KrylovConfig, VectorizedState};
use crate::model::{DensityMatrix, QuantumModel};
use crate::superops::{insertion, lindbladian, Superoperator};

pub use empirical::{mean_trajectory_correlation, EmpiricalEstimate, EmpiricalWindows};
pub use filtered::{fictitious_states, filtered_correlation, filtered_correlation_with};
pub use quadrature::{integrate, quadrature_correlation, quadrature_correlation_with, QuadratureResult};
pub use rk::{dormand_prince, RkConfig, RkStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpPoint {
    pub detector: String,
    pub time: f64,
}

impl SharpPoint {
    pub fn new(detector: impl Into<String>, time: f64) -> Self {
        Self {
            detector: detector.into(),
            time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum FilterShape {
    /// Indicator of `[start, end)`.
    Rect { start: f64, end: f64 },
    /// Piecewise-linear interpolation of `values` on the uniform grid
    /// `t0 + k·dt`, zero outside it.
    Sampled { t0: f64, dt: f64, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFilter {
    pub detector: String,
    #[serde(flatten)]
    pub shape: FilterShape,
}

impl WindowFilter {
    pub fn rect(detector: impl Into<String>, start: f64, end: f64) -> Self {
        Self {
            detector: detector.into(),
            shape: FilterShape::Rect { start, end },
        }
    }

    pub fn sampled(detector: impl Into<String>, t0: f64, dt: f64, values: Vec<f64>) -> Self {
        Self {
            detector: detector.into(),
            shape: FilterShape::Sampled { t0, dt, values },
        }
    }

    /// Check the shape invariants. An empty Rect (`start == end`) is allowed
    /// and integrates to zero.
    pub fn validate(&self) -> Result<(), AnalyticError> {
        match &self.shape {
            FilterShape::Rect { start, end } => {
                if !start.is_finite() || !end.is_finite() || start > end || *start < 0.0 {
                    return Err(AnalyticError::InvalidWindow(format!(
                        "{}: rect [{start}, {end}] must satisfy 0 <= start <= end",
                        self.detector
                    )));
                }
            }
            FilterShape::Sampled { t0, dt, values } => {
                if !t0.is_finite() || *t0 < 0.0 || !(*dt > 0.0 && dt.is_finite()) {
                    return Err(AnalyticError::InvalidWindow(format!(
                        "{}: sampled grid needs t0 >= 0 and dt > 0",
                        self.detector
                    )));
                }
                if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                    return Err(AnalyticError::InvalidWindow(format!(
                        "{}: sampled values must be finite and non-empty",
                        self.detector
                    )));
                }
            }
        }
        Ok(())
    }

    /// `(start, end)` of the support.
    pub fn support(&self) -> (f64, f64) {
        match &self.shape {
            FilterShape::Rect { start, end } => (*start, *end),
            FilterShape::Sampled { t0, dt, values } => (*t0, t0 + dt * (values.len() - 1) as f64),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match &self.shape {
            FilterShape::Rect { start, end } => {
                if t >= *start && t < *end {
                    1.0
                } else {
                    0.0
                }
            }
            FilterShape::Sampled { t0, dt, values } => {
                let x = (t - t0) / dt;
                let last = (values.len() - 1) as f64;
                if !(x >= 0.0 && x <= last) {
                    return 0.0;
                }
                let k = (x.floor() as usize).min(values.len() - 1);
                if k + 1 >= values.len() {
                    return values[k];
                }
                let frac = x - k as f64;
                values[k] * (1.0 - frac) + values[k + 1] * frac
            }
        }
    }

    pub fn is_rect(&self) -> bool {
        matches!(self.shape, FilterShape::Rect { .. })
    }

    /// Points where the filter or its derivative may jump.
    pub(crate) fn breakpoints(&self) -> Vec<f64> {
        match &self.shape {
            FilterShape::Rect { start, end } => vec![*start, *end],
            FilterShape::Sampled { t0, dt, values } => {
                (0..values.len()).map(|k| t0 + k as f64 * dt).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SharpInsertion,
    OdePiecewise,
    OdeRungeKutta,
    Quadrature,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::SharpInsertion => "sharp_insertion",
            Method::OdePiecewise => "ode_piecewise",
            Method::OdeRungeKutta => "ode_runge_kutta",
            Method::Quadrature => "quadrature",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Propagations, segments, RK steps or integrand evaluations, by method.
    pub steps: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub value: f64,
    pub order: usize,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticConfig {
    pub krylov: KrylovConfig,
    pub max_sharp_legs: usize,
    pub max_filtered_legs: usize,
    pub rk: RkConfig,
}

impl Default for AnalyticConfig {
    fn default() -> Self {
        Self {
            krylov: KrylovConfig::default(),
            max_sharp_legs: 8,
            max_filtered_legs: 6,
            rk: RkConfig::default(),
        }
    }
}

/// Lindbladian and per-detector insertions of a model, built once and reused
/// across many correlation evaluations.
pub struct Insertions {
    pub lindbladian: Superoperator,
    pub insertions: Vec<Superoperator>,
}

impl Insertions {
    pub fn new(m: &QuantumModel) -> Result<Self> {
        Ok(Self {
            lindbladian: lindbladian(m)?,
            insertions: m.detectors.iter().map(insertion).collect::<Result<_>>()?,
        })
    }
}

pub(crate) fn resolve_detector(m: &QuantumModel, label: &str) -> Result<usize, AnalyticError> {
    m.detector_index(label)
        .ok_or_else(|| AnalyticError::UnknownDetector(label.to_string()))
}

/// `C_{t₁,…,t_n}` of the sharp signal.
pub fn sharp_correlation(m: &QuantumModel, rho0: &DensityMatrix, points: &[SharpPoint]) -> Result<CorrelationResult> {
    sharp_correlation_with(m, rho0, points, &AnalyticConfig::default())
}

pub fn sharp_correlation_with(
    m: &QuantumModel,
    rho0: &DensityMatrix,
    points: &[SharpPoint],
    cfg: &AnalyticConfig,
) -> Result<CorrelationResult> {
    let ins = Insertions::new(m)?;
    let legs = resolve_sharp(m, points, cfg)?;
    sharp_value(&ins, rho0, &legs, &cfg.krylov)
}

/// Validate and sort sharp points into `(time, detector index)` legs.
pub(crate) fn resolve_sharp(
    m: &QuantumModel,
    points: &[SharpPoint],
    cfg: &AnalyticConfig,
) -> Result<Vec<(f64, usize)>, AnalyticError> {
    if points.is_empty() {
        return Err(AnalyticError::Unsupported("no correlation points".into()));
    }
    if points.len() > cfg.max_sharp_legs {
        return Err(AnalyticError::TooManyLegs {
            n: points.len(),
            cap: cfg.max_sharp_legs,
        });
    }
    let mut legs = Vec::with_capacity(points.len());
    for p in points {
        if !(p.time >= 0.0 && p.time.is_finite()) {
            return Err(AnalyticError::InvalidWindow(format!(
                "sharp time must be finite and non-negative, got {}",
                p.time
            )));
        }
        legs.push((p.time, resolve_detector(m, &p.detector)?));
    }
    legs.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(w) = legs.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(AnalyticError::DuplicateTimes(w[0].0));
    }
    Ok(legs)
}

/// Evaluate sorted legs.
pub(crate) fn sharp_value(
    ins: &Insertions,
    rho0: &DensityMatrix,
    legs: &[(f64, usize)],
    krylov: &KrylovConfig,
) -> Result<CorrelationResult> {
    let mut v: VectorizedState = vectorize(rho0.matrix())?;
    let mut t_prev = 0.0;
    for &(t, det) in legs {
        v = expm_action(&ins.lindbladian, &v, t - t_prev, krylov)?;
        v = ins.insertions[det].apply_to(&v);
        t_prev = t;
    }
    Ok(CorrelationResult {
        value: v.trace().re,
        order: legs.len(),
        method: Method::SharpInsertion,
        diagnostics: Diagnostics {
            steps: legs.len(),
            tolerance: krylov.tol,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dagger, devectorize, expm_dense, trace, C64};
    use crate::model::{model_zoo, DetectorKind};
    use ndarray::Array1;

    fn decay(theta: f64) -> (QuantumModel, DensityMatrix) {
        let (mut m, rho) = model_zoo("decay_photodetect").unwrap();
        m.detectors[0].dark_rate = theta;
        (m, rho)
    }

    fn sharp(m: &QuantumModel, rho: &DensityMatrix, pts: &[(&str, f64)]) -> f64 {
        let pts: Vec<_> = pts.iter().map(|(d, t)| SharpPoint::new(*d, *t)).collect();
        sharp_correlation(m, rho, &pts).unwrap().value
    }

    #[test]
    fn decay_mean_closed_form() {
        let (m, rho) = decay(0.05);
        for t in [0.0, 0.5, 1.0, 2.0] {
            let c = sharp(&m, &rho, &[("d0", t)]);
            let expected = 0.05 + 0.8 * (-t as f64).exp();
            assert!((c - expected).abs() / expected < 1e-8, "t={t}");
        }
        assert!((sharp(&m, &rho, &[("d0", 1.0)]) - 0.344_303_6).abs() < 1e-6);
    }

    #[test]
    fn antibunching_without_dark_counts() {
        let (m, rho) = decay(0.0);
        assert!(sharp(&m, &rho, &[("d0", 0.3), ("d0", 0.9)]).abs() < 1e-12);
    }

    #[test]
    fn homodyne_eigenstate_two_point() {
        let (m, rho) = model_zoo("qubit_homodyne_z").unwrap();
        for (a, b) in [(0.1, 0.2), (0.5, 3.0), (2.0, 2.5)] {
            assert!((sharp(&m, &rho, &[("d0", a), ("d0", b)]) - 4.0).abs() < 1e-10);
        }
    }

    #[test]
    fn pure_dark_counts_give_theta_power() {
        let (mut m, rho) = decay(0.3);
        m.detectors[0].efficiency = 1e-300;
        let v = sharp(&m, &rho, &[("d0", 0.1), ("d0", 0.4), ("d0", 1.1)]);
        assert!((v - 0.027).abs() < 1e-12);
    }

    #[test]
    fn order_invariance() {
        let (m, rho) = model_zoo("mixed_two_detector").unwrap();
        let a = sharp(&m, &rho, &[("jump", 0.2), ("homodyne", 0.7), ("jump", 1.3)]);
        let b = sharp(&m, &rho, &[("jump", 1.3), ("jump", 0.2), ("homodyne", 0.7)]);
        assert_eq!(a, b);
    }

    #[test]
    fn duplicate_and_unknown_rejected() {
        let (m, rho) = decay(0.05);
        let dup = [SharpPoint::new("d0", 1.0), SharpPoint::new("d0", 1.0)];
        assert!(matches!(
            sharp_correlation(&m, &rho, &dup),
            Err(crate::Error::Analytic(AnalyticError::DuplicateTimes(_)))
        ));
        let unknown = [SharpPoint::new("nope", 1.0)];
        assert!(matches!(
            sharp_correlation(&m, &rho, &unknown),
            Err(crate::Error::Analytic(AnalyticError::UnknownDetector(_)))
        ));
        let many: Vec<_> = (0..9).map(|k| SharpPoint::new("d0", k as f64)).collect();
        assert!(sharp_correlation(&m, &rho, &many).is_err());
    }

    #[test]
    fn one_point_closed_forms_match() {
        for name in crate::model::ZOO_NAMES {
            let (m, rho) = model_zoo(name).unwrap();
            let l = lindbladian(&m).unwrap().materialize();
            let t = 0.7;
            let prop = expm_dense(&(l * C64::new(t, 0.0))).unwrap();
            let v = vectorize(rho.matrix()).unwrap().into_data();
            let evolved = VectorizedState::from_data(m.dim, prop.dot(&Array1::from(v)).to_vec()).unwrap();
            let rho_t = devectorize(&evolved);
            for det in &m.detectors {
                let a = &det.operator;
                let expected = match det.kind {
                    DetectorKind::Jump => {
                        det.dark_rate + det.efficiency * trace(&a.dot(&rho_t).dot(&dagger(a))).re
                    }
                    DetectorKind::Diffusive => {
                        det.efficiency.sqrt() * trace(&(a + &dagger(a)).dot(&rho_t)).re
                    }
                };
                let got = sharp(&m, &rho, &[(det.label.as_str(), t)]);
                assert!((got - expected).abs() < 1e-9, "{name}/{}", det.label);
            }
        }
    }

    #[test]
    fn sampled_filter_interpolates() {
        let w = WindowFilter::sampled("d0", 1.0, 0.5, vec![0.0, 2.0, 1.0]);
        assert_eq!(w.value(0.9), 0.0);
        assert_eq!(w.value(1.25), 1.0);
        assert_eq!(w.value(1.5), 2.0);
        assert_eq!(w.value(2.0), 1.0);
        assert_eq!(w.value(2.01), 0.0);
        assert_eq!(w.support(), (1.0, 2.0));
    }

    #[test]
    fn window_validation() {
        assert!(WindowFilter::rect("d", 1.0, 0.5).validate().is_err());
        assert!(WindowFilter::rect("d", 0.5, 0.5).validate().is_ok());
        assert!(WindowFilter::sampled("d", 0.0, 0.0, vec![1.0]).validate().is_err());
        assert!(WindowFilter::sampled("d", 0.0, 0.1, vec![f64::NAN]).validate().is_err());
    }
}
