//! Monte Carlo estimates of filtered correlations from measurement records.

use serde::{Deserialize, Serialize};

use crate::error::{AnalyticError, Result};
use crate::trajectories::{MeasurementRecord, TimeGrid};

use super::{FilterShape, WindowFilter};

/// Windows discretized on a record grid: `I_f = Σ_k f(t_k)·dY_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalWindows {
    grid: TimeGrid,
    legs: Vec<Leg>,
    snap_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Leg {
    detector: usize,
    first: usize,
    weights: Vec<f64>,
}

impl EmpiricalWindows {
    /// Rect boundaries snap to the nearest grid point; Sampled filters are
    /// evaluated at the left edge of each step.
    pub fn new(windows: &[WindowFilter], grid: TimeGrid, labels: &[String]) -> Result<Self> {
        if windows.is_empty() {
            return Err(AnalyticError::Unsupported("no windows".into()).into());
        }
        let mut legs = Vec::with_capacity(windows.len());
        let mut snap_distance: f64 = 0.0;
        for w in windows {
            w.validate()?;
            let detector = labels
                .iter()
                .position(|l| *l == w.detector)
                .ok_or_else(|| AnalyticError::UnknownDetector(w.detector.clone()))?;
            let leg = match &w.shape {
                FilterShape::Rect { start, end } => {
                    let snap = |t: f64| {
                        let k = ((t - grid.t0) / grid.dt).round().clamp(0.0, grid.n_steps as f64);
                        (k as usize, (grid.time(k as usize) - t).abs())
                    };
                    let (a, da) = snap(*start);
                    let (b, db) = snap(*end);
                    snap_distance = snap_distance.max(da).max(db);
                    Leg {
                        detector,
                        first: a,
                        weights: vec![1.0; b.saturating_sub(a)],
                    }
                }
                FilterShape::Sampled { .. } => {
                    let weights: Vec<f64> = (0..grid.n_steps).map(|k| w.value(grid.time(k))).collect();
                    let first = weights.iter().position(|&v| v != 0.0).unwrap_or(0);
                    let last = weights.iter().rposition(|&v| v != 0.0).map_or(first, |k| k + 1);
                    Leg {
                        detector,
                        first,
                        weights: weights[first..last].to_vec(),
                    }
                }
            };
            legs.push(leg);
        }
        Ok(Self {
            grid,
            legs,
            snap_distance,
        })
    }

    /// Largest distance between a Rect boundary and its grid point.
    pub fn snap_distance(&self) -> f64 {
        self.snap_distance
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// `Π_i I_{f_i}` for one record.
    pub fn product(&self, record: &MeasurementRecord) -> Result<f64> {
        if record.grid != self.grid {
            return Err(AnalyticError::GridMismatch.into());
        }
        Ok(self
            .legs
            .iter()
            .map(|leg| {
                let inc = &record.increments[leg.detector][leg.first..leg.first + leg.weights.len()];
                leg.weights.iter().zip(inc).map(|(w, x)| w * x).sum::<f64>()
            })
            .product())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub n: usize,
    pub snap_distance: f64,
}

impl EmpiricalEstimate {
    /// Sample mean and standard error of `samples`. The samples are sorted
    /// first, so the result does not depend on their order.
    pub fn from_samples(samples: &mut [f64], snap_distance: f64) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(AnalyticError::NotEnoughRecords(n).into());
        }
        samples.sort_by(f64::total_cmp);
        let mean = compensated_sum(samples.iter().copied()) / n as f64;
        let ss = compensated_sum(samples.iter().map(|x| (x - mean) * (x - mean)));
        Ok(Self {
            estimate: mean,
            stderr: (ss / ((n - 1) * n) as f64).sqrt(),
            n,
            snap_distance,
        })
    }
}

/// Neumaier summation.
pub(crate) fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if f64::abs(sum) >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Sample mean of `Π_i I_{f_i}` over `records` with its standard error.
pub fn mean_trajectory_correlation(records: &[MeasurementRecord], windows: &[WindowFilter]) -> Result<EmpiricalEstimate> {
    let first = records.first().ok_or(AnalyticError::NotEnoughRecords(0))?;
    let ew = EmpiricalWindows::new(windows, first.grid, &first.labels)?;
    let mut samples = Vec::with_capacity(records.len());
    for r in records {
        if r.labels != first.labels {
            return Err(AnalyticError::GridMismatch.into());
        }
        samples.push(ew.product(r)?);
    }
    EmpiricalEstimate::from_samples(&mut samples, ew.snap_distance())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{model_zoo, DensityMatrix};
    use crate::trajectories::{Scheme, SimulationOptions, Simulator};

    fn record(grid: TimeGrid, clicks: &[usize]) -> MeasurementRecord {
        let (m, _) = model_zoo("decay_photodetect").unwrap();
        let mut r = MeasurementRecord::zeros(&m, grid);
        for &k in clicks {
            r.increments[0][k] = 1.0;
        }
        r
    }

    #[test]
    fn all_zero_records() {
        let grid = TimeGrid::new(0.0, 0.1, 20).unwrap();
        let recs = vec![record(grid, &[]); 5];
        let e = mean_trajectory_correlation(&recs, &[WindowFilter::rect("d0", 0.0, 1.0)]).unwrap();
        assert_eq!((e.estimate, e.stderr, e.n), (0.0, 0.0, 5));
    }

    #[test]
    fn counts_clicks_and_snaps() {
        let grid = TimeGrid::new(0.0, 0.1, 20).unwrap();
        let recs = vec![record(grid, &[2, 9]), record(grid, &[3])];
        let w = [WindowFilter::rect("d0", 0.24, 0.96)];
        let e = mean_trajectory_correlation(&recs, &w).unwrap();
        // snapped window [0.2, 1.0) holds steps 2..10
        assert_eq!(e.estimate, 1.5);
        assert!((e.snap_distance - 0.04).abs() < 1e-12);
        assert!((e.stderr - 0.5).abs() < 1e-12);
    }

    #[test]
    fn order_independent() {
        let grid = TimeGrid::new(0.0, 0.1, 20).unwrap();
        let mut recs: Vec<_> = (0..9).map(|k| record(grid, &[k, 2 * k])).collect();
        let w = [WindowFilter::rect("d0", 0.0, 0.8), WindowFilter::rect("d0", 0.5, 2.0)];
        let a = mean_trajectory_correlation(&recs, &w).unwrap();
        recs.reverse();
        recs.swap(1, 6);
        let b = mean_trajectory_correlation(&recs, &w).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_mismatch_and_small_ensembles() {
        let g1 = TimeGrid::new(0.0, 0.1, 20).unwrap();
        let g2 = TimeGrid::new(0.0, 0.1, 21).unwrap();
        let w = [WindowFilter::rect("d0", 0.0, 1.0)];
        assert!(mean_trajectory_correlation(&[record(g1, &[]), record(g2, &[])], &w).is_err());
        assert!(mean_trajectory_correlation(&[record(g1, &[])], &w).is_err());
    }

    #[test]
    fn sampled_weights_use_left_points() {
        let grid = TimeGrid::new(0.0, 0.5, 4).unwrap();
        let ew = EmpiricalWindows::new(
            &[WindowFilter::sampled("d0", 0.5, 0.5, vec![1.0, 3.0])],
            grid,
            &["d0".to_string()],
        )
        .unwrap();
        let r = record(grid, &[0, 1, 2, 3]);
        assert_eq!(ew.product(&r).unwrap(), 4.0);
    }

    #[test]
    fn dark_counts_are_poisson() {
        let (mut m, rho) = model_zoo("decay_photodetect").unwrap();
        m.detectors[0].efficiency = 1e-300;
        m.detectors[0].dark_rate = 0.5;
        let grid = TimeGrid::covering(0.01, 2.0).unwrap();
        let sim = Simulator::new(&m, grid, Scheme::KrausMap).unwrap();
        let rho = DensityMatrix::new(rho.matrix().clone()).unwrap();
        let recs: Vec<_> = (0..2000)
            .map(|s| sim.run(&rho, 5, s, &SimulationOptions::default()).unwrap().record)
            .collect();
        let e = mean_trajectory_correlation(&recs, &[WindowFilter::rect("d0", 0.0, 2.0)]).unwrap();
        assert!((e.estimate - 1.0).abs() < 4.0 * e.stderr, "{e:?}");
    }
}
