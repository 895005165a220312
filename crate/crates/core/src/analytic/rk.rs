//! Adaptive Dormand–Prince 5(4) integrator for complex linear systems.

use crate::error::AnalyticError;
use crate::linalg::{C64, ZERO};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RkConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for RkConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RkStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Last accepted step size, reusable as the next initial guess.
    pub last_step: f64,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Difference between the 5th- and 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate `y' = f(t, y)` from `t0` to `t1` in place. `h0` is the initial
/// step guess (defaults to the whole interval).
pub fn dormand_prince<F>(
    mut f: F,
    t0: f64,
    t1: f64,
    y: &mut [C64],
    h0: Option<f64>,
    cfg: &RkConfig,
    stats: &mut RkStats,
) -> Result<(), AnalyticError>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let n = y.len();
    let span = t1 - t0;
    if span <= 0.0 {
        return Ok(());
    }
    let mut k: Vec<Vec<C64>> = (0..7).map(|_| vec![ZERO; n]).collect();
    let mut stage = vec![ZERO; n];
    let mut y_new = vec![ZERO; n];
    let mut t = t0;
    let mut h = h0.filter(|h| *h > 0.0).unwrap_or(span).min(span);
    let h_min = 1e-14 * t1.abs().max(span);
    f(t, y, &mut k[0]);
    while t < t1 {
        if stats.accepted + stats.rejected >= cfg.max_steps {
            return Err(AnalyticError::StepSizeUnderflow { t });
        }
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }
        for s in 1..7 {
            for i in 0..n {
                let mut acc = ZERO;
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        acc += kj[i] * a;
                    }
                }
                stage[i] = y[i] + acc * h;
            }
            f(t + C[s] * h, &stage, &mut k[s]);
            if s == 6 {
                y_new.copy_from_slice(&stage);
            }
        }
        let mut err_sq = 0.0;
        for i in 0..n {
            let mut e = ZERO;
            for (j, kj) in k.iter().enumerate() {
                if E[j] != 0.0 {
                    e += kj[i] * E[j];
                }
            }
            let scale = cfg.atol + cfg.rtol * y[i].norm().max(y_new[i].norm());
            err_sq += (e.norm() * h / scale).powi(2);
        }
        let err = (err_sq / n.max(1) as f64).sqrt();
        if err <= 1.0 {
            t = if last { t1 } else { t + h };
            y.copy_from_slice(&y_new);
            k.swap(0, 6);
            stats.accepted += 1;
            stats.last_step = h;
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= factor;
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            if h < h_min {
                return Err(AnalyticError::StepSizeUnderflow { t });
            }
        }
    }
    Ok(())
}
