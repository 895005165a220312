//! Action of the matrix exponential on a vector by Arnoldi projection with
//! adaptive sub-stepping (the Expokit `expv` scheme).

use ndarray::Array2;

use super::{expm_dense, vec_axpy, vec_dot, vec_norm, VectorizedState, C64, ZERO};
use crate::error::LinalgError;

/// A linear map on `C^n` that can be applied without materializing it.
pub trait LinearOperator: Sync {
    fn len(&self) -> usize;

    /// `y = A x`. `y` is overwritten.
    fn apply(&self, x: &[C64], y: &mut [C64]);

    /// Any upper bound on the operator 2-norm. Only used for step-size
    /// heuristics, so a loose bound is fine.
    fn norm_estimate(&self) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovConfig {
    /// Maximum Krylov subspace dimension.
    pub max_dim: usize,
    /// Target error of the result in 2-norm, relative to `‖v‖`.
    pub tol: f64,
    pub max_substeps: usize,
    /// Step-halving attempts allowed per sub-step.
    pub max_rejections: usize,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        Self {
            max_dim: 30,
            tol: 1e-10,
            max_substeps: 100_000,
            max_rejections: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KrylovStats {
    pub substeps: usize,
    pub rejections: usize,
    /// Accumulated local error estimate.
    pub error_estimate: f64,
}

/// `e^{t·gen} v` for a vectorized state.
pub fn expm_action<Op: LinearOperator + ?Sized>(
    gen: &Op,
    v: &VectorizedState,
    t: f64,
    cfg: &KrylovConfig,
) -> Result<VectorizedState, LinalgError> {
    let (out, _) = expm_action_op(gen, v.data(), t, cfg)?;
    VectorizedState::from_data(v.dim(), out)
}

pub fn expm_action_op<Op: LinearOperator + ?Sized>(
    op: &Op,
    v: &[C64],
    t: f64,
    cfg: &KrylovConfig,
) -> Result<(Vec<C64>, KrylovStats), LinalgError> {
    let n = op.len();
    if v.len() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            found: v.len(),
        });
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(LinalgError::InvalidArgument(format!(
            "propagation time must be finite and non-negative, got {t}"
        )));
    }
    if !(cfg.tol > 0.0) {
        return Err(LinalgError::InvalidArgument(format!(
            "tolerance must be positive, got {}",
            cfg.tol
        )));
    }
    if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LinalgError::NonFinite);
    }

    let mut stats = KrylovStats::default();
    let v_norm = vec_norm(v);
    if t == 0.0 || v_norm == 0.0 {
        return Ok((v.to_vec(), stats));
    }

    let anorm = op.norm_estimate().max(f64::MIN_POSITIVE);
    let m = cfg.max_dim.min(n).max(1);
    let btol = 1e-7;
    let gamma = 0.9;
    let delta = 1.2;
    // Error budget per unit time so the total stays within tol·‖v‖.
    let tol_rate = cfg.tol * v_norm / t;
    let rndoff = anorm * f64::EPSILON;

    let round_step = |step: f64| -> f64 {
        let s = 10f64.powf(step.log10().floor() - 1.0);
        (step / s).ceil() * s
    };

    let mut w = v.to_vec();
    let mut beta = v_norm;
    let mut t_now = 0.0;
    let mut xm = 1.0 / m as f64;

    let fact = ((m as f64 + 1.0) / std::f64::consts::E).powf(m as f64 + 1.0)
        * (2.0 * std::f64::consts::PI * (m as f64 + 1.0)).sqrt();
    let mut t_new = (1.0 / anorm) * ((fact * cfg.tol) / (4.0 * anorm)).powf(xm);
    t_new = round_step(t_new).min(t);
    if !(t_new > 0.0) {
        t_new = t;
    }

    let mut basis: Vec<Vec<C64>> = (0..=m).map(|_| vec![ZERO; n]).collect();
    let mut p = vec![ZERO; n];

    while t_now < t {
        if stats.substeps >= cfg.max_substeps {
            return Err(LinalgError::KrylovNoConvergence {
                t_done: t_now,
                t_total: t,
                substeps: stats.substeps,
            });
        }
        stats.substeps += 1;
        let mut t_step = (t - t_now).min(t_new);

        let mut h = Array2::<C64>::zeros((m + 2, m + 2));
        for (b, wi) in basis[0].iter_mut().zip(&w) {
            *b = wi / beta;
        }
        let mut mb = m;
        let mut breakdown = false;
        for j in 0..m {
            op.apply(&basis[j], &mut p);
            for i in 0..=j {
                let hij = vec_dot(&basis[i], &p);
                h[[i, j]] = hij;
                vec_axpy(-hij, &basis[i], &mut p);
            }
            let s = vec_norm(&p);
            if s < btol {
                breakdown = true;
                mb = j + 1;
                t_step = t - t_now;
                break;
            }
            h[[j + 1, j]] = C64::new(s, 0.0);
            for (b, pi) in basis[j + 1].iter_mut().zip(&p) {
                *b = pi / s;
            }
        }

        let mut avnorm = 0.0;
        if !breakdown {
            h[[m + 1, m]] = C64::new(1.0, 0.0);
            op.apply(&basis[m], &mut p);
            avnorm = vec_norm(&p);
        }

        let mut rejections = 0;
        let (f, err_loc) = loop {
            let mx = if breakdown { mb } else { mb + 2 };
            let hs = h.slice(ndarray::s![0..mx, 0..mx]).mapv(|z| z * t_step);
            let f = expm_dense(&hs)?;
            if breakdown {
                break (f, btol.min(cfg.tol * v_norm * t_step / t));
            }
            let phi1 = (beta * f[[m, 0]]).norm();
            let phi2 = (beta * f[[m + 1, 0]] * avnorm).norm();
            let err = if phi1 > 10.0 * phi2 {
                xm = 1.0 / m as f64;
                phi2
            } else if phi1 > phi2 {
                xm = 1.0 / m as f64;
                (phi1 * phi2) / (phi1 - phi2)
            } else {
                xm = 1.0 / (m as f64 - 1.0).max(1.0);
                phi1
            };
            if err <= delta * t_step * tol_rate {
                break (f, err);
            }
            if rejections >= cfg.max_rejections {
                return Err(LinalgError::KrylovNoConvergence {
                    t_done: t_now,
                    t_total: t,
                    substeps: stats.substeps,
                });
            }
            t_step = round_step(gamma * t_step * (t_step * tol_rate / err).powf(xm));
            rejections += 1;
            stats.rejections += 1;
        };

        let mx = if breakdown { mb } else { mb + 1 };
        w.iter_mut().for_each(|z| *z = ZERO);
        for k in 0..mx {
            vec_axpy(beta * f[[k, 0]], &basis[k], &mut w);
        }
        beta = vec_norm(&w);
        t_now += t_step;
        if beta == 0.0 {
            break;
        }
        let err_safe = err_loc.max(f64::MIN_POSITIVE);
        t_new = round_step(gamma * t_step * (t_step * tol_rate / err_safe).powf(xm));
        if !(t_new > 0.0) || !t_new.is_finite() {
            t_new = t - t_now;
        }
        stats.error_estimate += err_loc.max(rndoff);
    }
    Ok((w, stats))
}
