//! Adaptive Gauss–Kronrod quadrature and the direct double-integral
//! evaluation of filtered correlations from sharp ones.

use crate::error::{AnalyticError, Result};
use crate::model::{DensityMatrix, DetectorKind, QuantumModel};

use super::{
    resolve_detector, sharp_value, AnalyticConfig, CorrelationResult, Diagnostics, FilterShape, Insertions, Method,
    WindowFilter,
};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// Gauss weights of the 7-point rule on the odd Kronrod nodes.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

fn gk15<F: FnMut(f64) -> Result<f64>>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x)? + f(c + x)?;
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Ok((kronrod * h, ((kronrod - gauss) * h).abs()))
}

/// Globally adaptive 15-point Gauss–Kronrod integration of `f` over
/// `[a, b]`. Stops once the summed error estimate is below `tol`.
pub fn integrate<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
    max_evals: usize,
) -> Result<QuadratureResult> {
    if b <= a {
        return Ok(QuadratureResult {
            value: 0.0,
            error: 0.0,
            evals: 0,
        });
    }
    let (v, e) = gk15(&mut f, a, b)?;
    let mut intervals = vec![(a, b, v, e)];
    let mut evals = 15;
    loop {
        let error: f64 = intervals.iter().map(|iv| iv.3).sum();
        if error <= tol {
            // sum in a fixed order so repeated calls agree bitwise
            intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
            let value = intervals.iter().map(|iv| iv.2).sum();
            return Ok(QuadratureResult { value, error, evals });
        }
        if evals + 30 > max_evals {
            return Err(AnalyticError::QuadratureNoConvergence { tol, max_evals }.into());
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("at least one interval");
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid)?;
        let (v2, e2) = gk15(&mut f, mid, hi)?;
        evals += 30;
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

/// Integrate over `[a, b]` split at the interior `cuts`.
fn integrate_split<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    a: f64,
    b: f64,
    cuts: &[f64],
    tol: f64,
    max_evals: usize,
) -> Result<QuadratureResult> {
    let mut pts = vec![a, b];
    pts.extend(cuts.iter().copied().filter(|&c| c > a && c < b));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let pieces = (pts.len() - 1) as f64;
    let mut total = QuadratureResult {
        value: 0.0,
        error: 0.0,
        evals: 0,
    };
    for w in pts.windows(2) {
        let r = integrate(&mut f, w[0], w[1], tol / pieces, max_evals)?;
        total.value += r.value;
        total.error += r.error;
        total.evals += r.evals;
    }
    Ok(total)
}

fn rect_bounds(w: &WindowFilter) -> Result<(f64, f64), AnalyticError> {
    w.validate()?;
    match w.shape {
        FilterShape::Rect { start, end } => Ok((start, end)),
        FilterShape::Sampled { .. } => Err(AnalyticError::Unsupported(
            "quadrature supports rectangular windows only".into(),
        )),
    }
}

/// Filtered correlation of one or two Rect windows by nested adaptive
/// quadrature of the sharp correlation, plus the equal-time term of the
/// double integral.
pub fn quadrature_correlation(
    m: &QuantumModel,
    rho0: &DensityMatrix,
    windows: &[WindowFilter],
    tol: f64,
) -> Result<CorrelationResult> {
    quadrature_correlation_with(m, rho0, windows, tol, 2_000_000, &AnalyticConfig::default())
}

pub fn quadrature_correlation_with(
    m: &QuantumModel,
    rho0: &DensityMatrix,
    windows: &[WindowFilter],
    tol: f64,
    max_evals: usize,
    cfg: &AnalyticConfig,
) -> Result<CorrelationResult> {
    if !(tol > 0.0) {
        return Err(AnalyticError::Unsupported(format!("tolerance must be positive, got {tol}")).into());
    }
    let ins = Insertions::new(m)?;
    let mut krylov = cfg.krylov;
    krylov.tol = krylov.tol.min(tol * 1e-3);
    let sharp1 = |det: usize, t: f64| sharp_value(&ins, rho0, &[(t, det)], &krylov).map(|r| r.value);

    let (value, evals) = match windows {
        [w] => {
            let (a, b) = rect_bounds(w)?;
            let det = resolve_detector(m, &w.detector)?;
            let r = integrate(|t| sharp1(det, t), a, b, tol, max_evals)?;
            (r.value, r.evals)
        }
        [w1, w2] => {
            let (a1, b1) = rect_bounds(w1)?;
            let (a2, b2) = rect_bounds(w2)?;
            let d1 = resolve_detector(m, &w1.detector)?;
            let d2 = resolve_detector(m, &w2.detector)?;
            let mut evals = 0;
            let inner_tol = 0.1 * tol / (b1 - a1).max(1.0);
            let outer = {
                let evals = &mut evals;
                let ins = &ins;
                integrate_split(
                    |t1| {
                        let inner = integrate_split(
                            |t2| {
                                let legs = if t1 < t2 { [(t1, d1), (t2, d2)] } else { [(t2, d2), (t1, d1)] };
                                sharp_value(ins, rho0, &legs, &krylov).map(|r| r.value)
                            },
                            a2,
                            b2,
                            &[t1],
                            inner_tol,
                            max_evals,
                        )?;
                        *evals += inner.evals;
                        Ok(inner.value)
                    },
                    a1,
                    b1,
                    &[a2, b2],
                    0.9 * tol,
                    max_evals,
                )?
            };
            // equal-time term: dY² = dt (diffusive), dN² = dN (jump)
            let (lo, hi) = (a1.max(a2), b1.min(b2));
            let overlap = if d1 != d2 || hi <= lo {
                0.0
            } else {
                match m.detectors[d1].kind {
                    DetectorKind::Diffusive => hi - lo,
                    DetectorKind::Jump => {
                        let r = integrate(|t| sharp1(d1, t), lo, hi, 0.1 * tol, max_evals)?;
                        evals += r.evals;
                        r.value
                    }
                }
            };
            (outer.value + overlap, evals + outer.evals)
        }
        _ => {
            return Err(AnalyticError::Unsupported(format!(
                "quadrature handles one or two windows, got {}",
                windows.len()
            ))
            .into())
        }
    };
    Ok(CorrelationResult {
        value,
        order: windows.len(),
        method: Method::Quadrature,
        diagnostics: Diagnostics { steps: evals, tolerance: tol },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::filtered_correlation;
    use crate::model::model_zoo;

    #[test]
    fn integrates_polynomials_and_exponentials() {
        let r = integrate(|x| Ok(x.powi(5)), 0.0, 2.0, 1e-12, 10_000).unwrap();
        assert!((r.value - 64.0 / 6.0).abs() < 1e-12);
        let r = integrate(|x| Ok((-x).exp()), 0.0, 3.0, 1e-12, 10_000).unwrap();
        assert!((r.value - (1.0 - (-3.0f64).exp())).abs() < 1e-12);
        let r = integrate(|x| Ok(x.abs().sqrt()), -1.0, 1.0, 1e-8, 100_000).unwrap();
        assert!((r.value - 4.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn reports_non_convergence() {
        let r = integrate(|x| Ok(if x < 0.3 { 0.0 } else { 1.0 }), 0.0, 1.0, 1e-15, 200);
        assert!(r.is_err());
    }

    #[test]
    fn zero_width_window() {
        let (m, rho) = model_zoo("qubit_homodyne_z").unwrap();
        let w = [WindowFilter::rect("d0", 0.5, 0.5), WindowFilter::rect("d0", 0.0, 1.0)];
        let r = quadrature_correlation(&m, &rho, &w, 1e-9).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn symmetric_in_windows() {
        let (m, rho) = model_zoo("driven_qubit_fluorescence").unwrap();
        let w1 = WindowFilter::rect("d0", 0.0, 1.0);
        let w2 = WindowFilter::rect("d0", 0.4, 1.7);
        let a = quadrature_correlation(&m, &rho, &[w1.clone(), w2.clone()], 1e-9).unwrap().value;
        let b = quadrature_correlation(&m, &rho, &[w2, w1], 1e-9).unwrap().value;
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn one_window_reduction() {
        let (m, rho) = model_zoo("driven_qubit_fluorescence").unwrap();
        let w = [WindowFilter::rect("d0", 0.3, 1.8)];
        let q = quadrature_correlation(&m, &rho, &w, 1e-10).unwrap().value;
        let f = filtered_correlation(&m, &rho, &w, 2.0).unwrap().value;
        assert!((q - f).abs() < 1e-8);
    }

    #[test]
    fn sampled_windows_unsupported() {
        let (m, rho) = model_zoo("qubit_homodyne_z").unwrap();
        let w = [WindowFilter::sampled("d0", 0.0, 0.1, vec![1.0; 3])];
        assert!(quadrature_correlation(&m, &rho, &w, 1e-6).is_err());
    }
}
