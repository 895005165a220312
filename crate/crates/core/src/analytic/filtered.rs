//! Filtered correlations from the subset-indexed fictitious-state system
//!
//! `dρ^(S)/dt = 𝓛ρ^(S) + Σ_{∅≠T⊆S} c_T(t) 𝒜_T ρ^(S∖T)`,
//!
//! where `T` ranges over leg subsets on a single detector: singletons
//! (`f_i √η L_+`) and pairs (`f_i f_k I`) for diffusive detectors, and every
//! subset (`Π f_i (θI + ηV_×)`) for jump detectors.

use crate::error::{AnalyticError, Result};
use crate::linalg::{expm_action_op, vectorize, LinearOperator, VectorizedState, C64, ZERO};
use crate::model::{DensityMatrix, DetectorKind, QuantumModel};

use super::rk::{dormand_prince, RkStats};
use super::{resolve_detector, AnalyticConfig, CorrelationResult, Diagnostics, FilterShape, Insertions, Method, WindowFilter};

/// Boundaries closer than this are merged.
const BOUNDARY_DEDUP: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
enum BlockOp {
    Identity,
    Insertion(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Rule {
    target: usize,
    source: usize,
    legs: usize,
    op: BlockOp,
}

struct BlockSystem<'a> {
    ins: &'a Insertions,
    windows: Vec<WindowFilter>,
    rules: Vec<Rule>,
    n_states: usize,
    block: usize,
}

impl<'a> BlockSystem<'a> {
    fn new(m: &QuantumModel, ins: &'a Insertions, windows: &[WindowFilter]) -> Result<Self> {
        let n = windows.len();
        let mut dets = Vec::with_capacity(n);
        for w in windows {
            w.validate()?;
            dets.push(resolve_detector(m, &w.detector)?);
        }
        let n_states = 1usize << n;
        let mut rules = Vec::new();
        for s in 1..n_states {
            // nonempty subsets t of s, in decreasing order
            let mut t = s;
            while t > 0 {
                if let Some(op) = subset_op(m, &dets, t) {
                    rules.push(Rule {
                        target: s,
                        source: s ^ t,
                        legs: t,
                        op,
                    });
                }
                t = (t - 1) & s;
            }
        }
        Ok(Self {
            ins,
            windows: windows.to_vec(),
            rules,
            n_states,
            block: m.dim * m.dim,
        })
    }

    fn len(&self) -> usize {
        self.n_states * self.block
    }

    /// Rule coefficients for a time `t` inside the breakpoint interval whose
    /// midpoint is `mid`.
    fn coefficients(&self, t: f64, mid: f64, out: &mut [f64]) {
        let f: Vec<f64> = self.windows.iter().map(|w| piece_value(w, t, mid)).collect();
        for (c, r) in out.iter_mut().zip(&self.rules) {
            let mut prod = 1.0;
            let mut legs = r.legs;
            while legs != 0 {
                let i = legs.trailing_zeros() as usize;
                prod *= f[i];
                legs &= legs - 1;
            }
            *c = prod;
        }
    }

    fn op_norm(&self, op: BlockOp) -> f64 {
        match op {
            BlockOp::Identity => 1.0,
            BlockOp::Insertion(d) => self.ins.insertions[d].norm_estimate(),
        }
    }

    fn apply(&self, coeffs: &[f64], x: &[C64], y: &mut [C64]) {
        let b = self.block;
        for s in 0..self.n_states {
            self.ins
                .lindbladian
                .apply(&x[s * b..(s + 1) * b], &mut y[s * b..(s + 1) * b]);
        }
        for (r, &c) in self.rules.iter().zip(coeffs) {
            if c == 0.0 {
                continue;
            }
            let src = &x[r.source * b..(r.source + 1) * b];
            let dst = &mut y[r.target * b..(r.target + 1) * b];
            match r.op {
                BlockOp::Identity => {
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += s * c;
                    }
                }
                BlockOp::Insertion(det) => self.ins.insertions[det].apply_add(C64::new(c, 0.0), src, dst),
            }
        }
    }
}

/// Which block operator couples `ρ^(S∖T)` into `ρ^(S)` for leg subset `t`.
fn subset_op(m: &QuantumModel, dets: &[usize], t: usize) -> Option<BlockOp> {
    let first = t.trailing_zeros() as usize;
    let det = dets[first];
    let mut rest = t;
    let mut size = 0;
    while rest != 0 {
        let i = rest.trailing_zeros() as usize;
        if dets[i] != det {
            return None;
        }
        size += 1;
        rest &= rest - 1;
    }
    match m.detectors[det].kind {
        DetectorKind::Jump => Some(BlockOp::Insertion(det)),
        DetectorKind::Diffusive => match size {
            1 => Some(BlockOp::Insertion(det)),
            2 => Some(BlockOp::Identity),
            _ => None,
        },
    }
}

/// Filter value at `t`, using the polynomial piece that contains `mid`.
/// Keeps Rect and piecewise-linear filters smooth inside an interval even
/// when a stage lands exactly on a breakpoint.
fn piece_value(w: &WindowFilter, t: f64, mid: f64) -> f64 {
    match &w.shape {
        FilterShape::Rect { .. } => w.value(mid),
        FilterShape::Sampled { t0, dt, values } => {
            let (lo, hi) = w.support();
            if !(mid >= lo && mid <= hi) || values.len() < 2 {
                return if values.len() == 1 && mid == lo { values[0] } else { 0.0 };
            }
            let k = (((mid - t0) / dt).floor() as usize).min(values.len() - 2);
            let frac = (t - (t0 + k as f64 * dt)) / dt;
            values[k] * (1.0 - frac) + values[k + 1] * frac
        }
    }
}

struct FixedBlock<'s, 'a> {
    sys: &'s BlockSystem<'a>,
    coeffs: Vec<f64>,
    norm: f64,
}

impl LinearOperator for FixedBlock<'_, '_> {
    fn len(&self) -> usize {
        self.sys.len()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.sys.apply(&self.coeffs, x, y);
    }

    fn norm_estimate(&self) -> f64 {
        self.norm
    }
}

fn breakpoints(windows: &[WindowFilter], start: f64, end: f64) -> Vec<f64> {
    let mut pts = vec![start, end];
    for w in windows {
        pts.extend(w.breakpoints().into_iter().filter(|&p| p > start && p < end));
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= BOUNDARY_DEDUP);
    pts
}

struct Evolution {
    state: Vec<C64>,
    method: Method,
    steps: usize,
    tolerance: f64,
}

fn evolve(sys: &BlockSystem, rho0: &DensityMatrix, until: f64, cfg: &AnalyticConfig) -> Result<Evolution> {
    let mut state = vec![ZERO; sys.len()];
    state[..sys.block].copy_from_slice(vectorize(rho0.matrix())?.data());
    let pts = breakpoints(&sys.windows, 0.0, until);
    let mut coeffs = vec![0.0; sys.rules.len()];
    let piecewise = sys.windows.iter().all(WindowFilter::is_rect);
    let l_norm = sys.ins.lindbladian.norm_estimate();

    if piecewise {
        let mut segments = 0;
        for seg in pts.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            if b <= a {
                continue;
            }
            let mid = 0.5 * (a + b);
            sys.coefficients(mid, mid, &mut coeffs);
            let norm = l_norm
                + sys
                    .rules
                    .iter()
                    .zip(&coeffs)
                    .map(|(r, c)| c.abs() * sys.op_norm(r.op))
                    .sum::<f64>();
            if coeffs.iter().all(|&c| c == 0.0) {
                // uncoupled: propagate each nonzero block on its own
                for s in 0..sys.n_states {
                    let blk = &mut state[s * sys.block..(s + 1) * sys.block];
                    if blk.iter().all(|z| *z == ZERO) {
                        continue;
                    }
                    let (out, _) = expm_action_op(&sys.ins.lindbladian, blk, b - a, &cfg.krylov)?;
                    blk.copy_from_slice(&out);
                }
            } else {
                let op = FixedBlock {
                    sys,
                    coeffs: coeffs.clone(),
                    norm,
                };
                state = expm_action_op(&op, &state, b - a, &cfg.krylov)?.0;
            }
            segments += 1;
        }
        Ok(Evolution {
            state,
            method: Method::OdePiecewise,
            steps: segments,
            tolerance: cfg.krylov.tol,
        })
    } else {
        let mut stats = RkStats::default();
        let mut h = None;
        let mut dy_coeffs = vec![0.0; sys.rules.len()];
        for seg in pts.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            if b <= a {
                continue;
            }
            let mid = 0.5 * (a + b);
            dormand_prince(
                |t, y, dy| {
                    sys.coefficients(t, mid, &mut dy_coeffs);
                    sys.apply(&dy_coeffs, y, dy);
                },
                a,
                b,
                &mut state,
                h,
                &cfg.rk,
                &mut stats,
            )?;
            h = Some(stats.last_step);
        }
        Ok(Evolution {
            state,
            method: Method::OdeRungeKutta,
            steps: stats.accepted,
            tolerance: cfg.rk.rtol,
        })
    }
}

fn check_legs(windows: &[WindowFilter], horizon: f64, cfg: &AnalyticConfig) -> Result<f64, AnalyticError> {
    if windows.is_empty() {
        return Err(AnalyticError::Unsupported("no windows given".into()));
    }
    if windows.len() > cfg.max_filtered_legs {
        return Err(AnalyticError::TooManyLegs {
            n: windows.len(),
            cap: cfg.max_filtered_legs,
        });
    }
    let support_end = windows.iter().map(|w| w.support().1).fold(0.0, f64::max);
    if !(horizon.is_finite() && horizon >= support_end) {
        return Err(AnalyticError::HorizonTooShort { horizon, support_end });
    }
    Ok(support_end)
}

/// `C_{f₁,…,f_n}` for filters integrated against the signal up to `horizon`.
pub fn filtered_correlation(
    m: &QuantumModel,
    rho0: &DensityMatrix,
    windows: &[WindowFilter],
    horizon: f64,
) -> Result<CorrelationResult> {
    filtered_correlation_with(m, rho0, windows, horizon, &AnalyticConfig::default())
}

pub fn filtered_correlation_with(
    m: &QuantumModel,
    rho0: &DensityMatrix,
    windows: &[WindowFilter],
    horizon: f64,
    cfg: &AnalyticConfig,
) -> Result<CorrelationResult> {
    let support_end = check_legs(windows, horizon, cfg)?;
    let ins = Insertions::new(m)?;
    let sys = BlockSystem::new(m, &ins, windows)?;
    // Evolution after the last window is trace preserving, so the trace of
    // the top state is final once every window has closed.
    let ev = evolve(&sys, rho0, support_end, cfg)?;
    let top = &ev.state[(sys.n_states - 1) * sys.block..];
    let d = m.dim;
    let value: C64 = (0..d).map(|i| top[i + d * i]).sum();
    Ok(CorrelationResult {
        value: value.re,
        order: windows.len(),
        method: ev.method,
        diagnostics: Diagnostics {
            steps: ev.steps,
            tolerance: ev.tolerance,
        },
    })
}

/// All fictitious states `ρ^(S)` at `horizon`, indexed by the leg bitmask `S`
/// (bit `i` set when leg `i` is in `S`).
pub fn fictitious_states(
    m: &QuantumModel,
    rho0: &DensityMatrix,
    windows: &[WindowFilter],
    horizon: f64,
    cfg: &AnalyticConfig,
) -> Result<Vec<VectorizedState>> {
    check_legs(windows, horizon, cfg)?;
    let ins = Insertions::new(m)?;
    let sys = BlockSystem::new(m, &ins, windows)?;
    let ev = evolve(&sys, rho0, horizon, cfg)?;
    Ok(ev
        .state
        .chunks(sys.block)
        .map(|c| VectorizedState::from_data(m.dim, c.to_vec()).expect("block of length d²"))
        .collect())
}
