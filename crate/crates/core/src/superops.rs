//! Superoperators built from lists of `(left, right)` factor pairs.
//!
//! A term `c · (A, B)` is the map `ρ ↦ c A ρ B`; either factor may be the
//! identity. The factor list is the single source of truth; the dense
//! `d² × d²` matrix is derived from it and cached for small dimensions.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, ArrayView2, ArrayViewMut2, ShapeBuilder};

use crate::error::{Error, Result};
use crate::linalg::{
    dagger, frobenius_norm, identity, kron, vectorize, ComplexMatrix, LinearOperator,
    VectorizedState, C64, I, ONE, ZERO,
};
use crate::model::{Detector, DetectorKind, QuantumModel};

/// Superoperators acting on Hilbert dimension up to this size carry a
/// materialized `d² × d²` matrix; above it they are applied matrix-free.
pub const MATERIALIZE_CUTOFF: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    Identity,
    Matrix(ComplexMatrix),
}

impl Factor {
    fn norm_bound(&self) -> f64 {
        match self {
            Factor::Identity => 1.0,
            Factor::Matrix(m) => frobenius_norm(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorTerm {
    pub coeff: C64,
    pub left: Factor,
    pub right: Factor,
}

impl FactorTerm {
    pub fn new(coeff: C64, left: Factor, right: Factor) -> Self {
        Self { coeff, left, right }
    }

    /// `ρ ↦ c ρ`.
    pub fn scalar(coeff: C64) -> Self {
        Self::new(coeff, Factor::Identity, Factor::Identity)
    }

    pub fn left(coeff: C64, a: ComplexMatrix) -> Self {
        Self::new(coeff, Factor::Matrix(a), Factor::Identity)
    }

    pub fn right(coeff: C64, b: ComplexMatrix) -> Self {
        Self::new(coeff, Factor::Identity, Factor::Matrix(b))
    }

    /// `ρ ↦ c A ρ A†`.
    pub fn sandwich(coeff: C64, a: &ComplexMatrix) -> Self {
        Self::new(coeff, Factor::Matrix(a.clone()), Factor::Matrix(dagger(a)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuperopForm {
    Materialized,
    MatrixFree,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    dim: usize,
    terms: Vec<FactorTerm>,
    dense: Option<ComplexMatrix>,
    norm_bound: f64,
}

impl Superoperator {
    /// Build from factor terms, merging one-sided and scalar terms. Terms with
    /// zero coefficient are dropped.
    pub fn from_terms(dim: usize, terms: Vec<FactorTerm>) -> Result<Self> {
        Self::with_cutoff(dim, terms, MATERIALIZE_CUTOFF)
    }

    pub fn with_cutoff(dim: usize, terms: Vec<FactorTerm>, cutoff: usize) -> Result<Self> {
        for t in &terms {
            for f in [&t.left, &t.right] {
                if let Factor::Matrix(m) = f {
                    if m.dim() != (dim, dim) {
                        return Err(Error::Superops(format!(
                            "factor of shape {:?} does not act on dimension {dim}",
                            m.dim()
                        )));
                    }
                }
            }
        }
        let terms = simplify(terms);
        let norm_bound = terms
            .iter()
            .map(|t| t.coeff.norm() * t.left.norm_bound() * t.right.norm_bound())
            .sum();
        let mut op = Self {
            dim,
            terms,
            dense: None,
            norm_bound,
        };
        if dim <= cutoff {
            op.dense = Some(op.materialize());
            debug_assert!(op.forms_agree(20, 1e-12), "materialized form disagrees with factors");
        }
        Ok(op)
    }

    pub fn zero(dim: usize) -> Self {
        Self::from_terms(dim, Vec::new()).expect("no factors to check")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[FactorTerm] {
        &self.terms
    }

    pub fn form(&self) -> SuperopForm {
        if self.dense.is_some() {
            SuperopForm::Materialized
        } else {
            SuperopForm::MatrixFree
        }
    }

    /// Drop the cached dense matrix and apply matrix-free from now on.
    pub fn into_matrix_free(mut self) -> Self {
        self.dense = None;
        self
    }

    /// Dense `d² × d²` matrix acting on column-stacked states.
    pub fn materialize(&self) -> ComplexMatrix {
        if let Some(m) = &self.dense {
            return m.clone();
        }
        let d = self.dim;
        let eye = identity(d);
        let mut out = ComplexMatrix::zeros((d * d, d * d));
        for t in &self.terms {
            let a = match &t.left {
                Factor::Identity => &eye,
                Factor::Matrix(m) => m,
            };
            let bt = match &t.right {
                Factor::Identity => eye.clone(),
                Factor::Matrix(m) => m.t().to_owned(),
            };
            // vec(A X B) = (Bᵀ ⊗ A) vec(X)
            out.scaled_add(t.coeff, &kron(&bt, a));
        }
        out
    }

    pub fn add(&self, other: &Superoperator) -> Result<Superoperator> {
        if self.dim != other.dim {
            return Err(Error::Superops(format!(
                "cannot add superoperators on dimensions {} and {}",
                self.dim, other.dim
            )));
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Superoperator::from_terms(self.dim, terms)
    }

    pub fn scale(&self, c: C64) -> Superoperator {
        let terms = self
            .terms
            .iter()
            .map(|t| FactorTerm::new(t.coeff * c, t.left.clone(), t.right.clone()))
            .collect();
        Superoperator::from_terms(self.dim, terms).expect("dimensions already checked")
    }

    /// Apply with the factor list, ignoring any materialized form.
    pub fn apply_matrix_free(&self, x: &[C64], y: &mut [C64]) {
        let d = self.dim;
        let xv = ArrayView2::from_shape((d, d).f(), x).expect("input length d²");
        let mut yv = ArrayViewMut2::from_shape((d, d).f(), y).expect("output length d²");
        yv.fill(ZERO);
        let mut tmp = ComplexMatrix::zeros((d, d));
        for t in &self.terms {
            match (&t.left, &t.right) {
                (Factor::Identity, Factor::Identity) => yv.scaled_add(t.coeff, &xv),
                (Factor::Matrix(a), Factor::Identity) => {
                    general_mat_mul(t.coeff, a, &xv, ONE, &mut yv)
                }
                (Factor::Identity, Factor::Matrix(b)) => {
                    general_mat_mul(t.coeff, &xv, b, ONE, &mut yv)
                }
                (Factor::Matrix(a), Factor::Matrix(b)) => {
                    general_mat_mul(ONE, a, &xv, ZERO, &mut tmp);
                    general_mat_mul(t.coeff, &tmp, b, ONE, &mut yv);
                }
            }
        }
    }

    /// `y += c · A x`.
    pub fn apply_add(&self, c: C64, x: &[C64], y: &mut [C64]) {
        match &self.dense {
            Some(m) => {
                for (i, yi) in y.iter_mut().enumerate() {
                    let mut acc = ZERO;
                    for (a, b) in m.row(i).iter().zip(x) {
                        acc += a * b;
                    }
                    *yi += c * acc;
                }
            }
            None => {
                let mut tmp = vec![ZERO; x.len()];
                self.apply_matrix_free(x, &mut tmp);
                for (yi, t) in y.iter_mut().zip(&tmp) {
                    *yi += c * t;
                }
            }
        }
    }

    /// Apply to a d×d matrix.
    pub fn apply_to_matrix(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let v = vectorize(rho).expect("square input");
        crate::linalg::devectorize(&self.apply_to(&v))
    }

    pub fn apply_to(&self, v: &VectorizedState) -> VectorizedState {
        let mut out = vec![ZERO; self.dim * self.dim];
        self.apply(v.data(), &mut out);
        VectorizedState::from_data(self.dim, out).expect("length d²")
    }

    /// Compare the materialized and factor forms on random inputs.
    pub fn forms_agree(&self, samples: usize, tol: f64) -> bool {
        use rand::{Rng, SeedableRng};
        let d = self.dim;
        let dense = self.materialize();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
        let mut y = vec![ZERO; d * d];
        (0..samples).all(|_| {
            let x: Vec<C64> = (0..d * d)
                .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            self.apply_matrix_free(&x, &mut y);
            let yd = dense.dot(&Array1::from(x));
            let scale = 1.0 + self.norm_bound;
            y.iter().zip(yd.iter()).all(|(a, b)| (a - b).norm() <= tol * scale)
        })
    }
}

impl LinearOperator for Superoperator {
    fn len(&self) -> usize {
        self.dim * self.dim
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        match &self.dense {
            Some(m) => {
                for (i, yi) in y.iter_mut().enumerate() {
                    let row = m.row(i);
                    let mut acc = ZERO;
                    for (a, b) in row.iter().zip(x) {
                        acc += a * b;
                    }
                    *yi = acc;
                }
            }
            None => self.apply_matrix_free(x, y),
        }
    }

    fn norm_estimate(&self) -> f64 {
        self.norm_bound
    }
}

/// Merge all left-only, right-only and scalar terms; keep two-sided terms
/// in order.
fn simplify(terms: Vec<FactorTerm>) -> Vec<FactorTerm> {
    let mut scalar = ZERO;
    let mut left: Option<ComplexMatrix> = None;
    let mut right: Option<ComplexMatrix> = None;
    let mut two_sided = Vec::new();
    let accumulate = |slot: &mut Option<ComplexMatrix>, c: C64, m: ComplexMatrix| match slot {
        Some(acc) => acc.scaled_add(c, &m),
        None => *slot = Some(m * c),
    };
    for t in terms {
        let zero_factor = |f: &Factor| matches!(f, Factor::Matrix(m) if m.iter().all(|z| *z == ZERO));
        if t.coeff == ZERO || zero_factor(&t.left) || zero_factor(&t.right) {
            continue;
        }
        match (t.left, t.right) {
            (Factor::Identity, Factor::Identity) => scalar += t.coeff,
            (Factor::Matrix(a), Factor::Identity) => accumulate(&mut left, t.coeff, a),
            (Factor::Identity, Factor::Matrix(b)) => accumulate(&mut right, t.coeff, b),
            (l, r) => two_sided.push(FactorTerm::new(t.coeff, l, r)),
        }
    }
    let mut out = Vec::with_capacity(two_sided.len() + 3);
    if let Some(a) = left {
        out.push(FactorTerm::left(ONE, a));
    }
    if let Some(b) = right {
        out.push(FactorTerm::right(ONE, b));
    }
    out.extend(two_sided);
    if scalar != ZERO {
        out.push(FactorTerm::scalar(scalar));
    }
    out
}

fn check_square(l: &ComplexMatrix) -> Result<usize> {
    let (r, c) = l.dim();
    if r != c {
        return Err(Error::Superops(format!("operator of shape {r}x{c} is not square")));
    }
    Ok(r)
}

fn dissipator_terms(l: &ComplexMatrix) -> Vec<FactorTerm> {
    let ldl = dagger(l).dot(l);
    let half = C64::new(-0.5, 0.0);
    vec![
        FactorTerm::sandwich(ONE, l),
        FactorTerm::left(half, ldl.clone()),
        FactorTerm::right(half, ldl),
    ]
}

/// `𝒟[L](ρ) = LρL† − ½L†Lρ − ½ρL†L`.
pub fn dissipator(l: &ComplexMatrix) -> Result<Superoperator> {
    let d = check_square(l)?;
    Superoperator::from_terms(d, dissipator_terms(l))
}

fn lindbladian_terms(m: &QuantumModel) -> Vec<FactorTerm> {
    let mut terms = vec![
        FactorTerm::left(-I, m.hamiltonian.clone()),
        FactorTerm::right(I, m.hamiltonian.clone()),
    ];
    for det in &m.detectors {
        terms.extend(dissipator_terms(&det.operator));
    }
    terms
}

/// `𝓛(ρ) = −i[H, ρ] + Σ_k 𝒟[L_k](ρ)` over every detector.
pub fn lindbladian(m: &QuantumModel) -> Result<Superoperator> {
    Superoperator::from_terms(m.dim, lindbladian_terms(m))
}

fn require_kind(det: &Detector, kind: DetectorKind) -> Result<()> {
    if det.kind != kind {
        return Err(Error::Superops(format!(
            "detector '{}' is {}, expected {kind}",
            det.label, det.kind
        )));
    }
    Ok(())
}

fn jump_insertion_terms(det: &Detector) -> Vec<FactorTerm> {
    vec![
        FactorTerm::scalar(C64::new(det.dark_rate, 0.0)),
        FactorTerm::sandwich(C64::new(det.efficiency, 0.0), &det.operator),
    ]
}

fn plus_terms(coeff: C64, l: &ComplexMatrix) -> Vec<FactorTerm> {
    vec![FactorTerm::left(coeff, l.clone()), FactorTerm::right(coeff, dagger(l))]
}

/// Jump insertion `θI + η V_×`, with `V_×(ρ) = VρV†`.
pub fn jump_insertion(det: &Detector) -> Result<Superoperator> {
    require_kind(det, DetectorKind::Jump)?;
    let d = check_square(&det.operator)?;
    Superoperator::from_terms(d, jump_insertion_terms(det))
}

/// Diffusive insertion `√η L_+`, with `L_+(ρ) = Lρ + ρL†`.
pub fn diff_insertion(det: &Detector) -> Result<Superoperator> {
    require_kind(det, DetectorKind::Diffusive)?;
    let d = check_square(&det.operator)?;
    Superoperator::from_terms(d, plus_terms(C64::new(det.efficiency.sqrt(), 0.0), &det.operator))
}

/// The insertion superoperator matching the detector kind.
pub fn insertion(det: &Detector) -> Result<Superoperator> {
    match det.kind {
        DetectorKind::Jump => jump_insertion(det),
        DetectorKind::Diffusive => diff_insertion(det),
    }
}

/// `M₀ = I − iH dt − ½ L†L dt`.
fn no_click_operator(l: &ComplexMatrix, h: &ComplexMatrix, dt: f64) -> ComplexMatrix {
    let d = l.nrows();
    let ldl = dagger(l).dot(l);
    identity(d) - h * (I * dt) - ldl * C64::new(0.5 * dt, 0.0)
}

fn check_kraus_args(det: &Detector, h: &ComplexMatrix, dt: f64) -> Result<usize> {
    let d = check_square(&det.operator)?;
    if h.dim() != (d, d) {
        return Err(Error::Superops(format!(
            "Hamiltonian shape {:?} does not match detector dimension {d}",
            h.dim()
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Superops(format!("time step must be positive, got {dt}")));
    }
    Ok(d)
}

/// Partial Kraus maps `(K₀, K₁)` of a photodetector over one step `dt`.
pub fn kraus_maps_jump(
    det: &Detector,
    h: &ComplexMatrix,
    dt: f64,
) -> Result<(Superoperator, Superoperator)> {
    require_kind(det, DetectorKind::Jump)?;
    let d = check_kraus_args(det, h, dt)?;
    let m0 = no_click_operator(&det.operator, h, dt);
    let (theta, eta) = (det.dark_rate, det.efficiency);
    let k0 = Superoperator::from_terms(
        d,
        vec![
            FactorTerm::sandwich(C64::new(1.0 - theta * dt, 0.0), &m0),
            FactorTerm::sandwich(C64::new((1.0 - eta) * dt, 0.0), &det.operator),
        ],
    )?;
    let k1 = Superoperator::from_terms(
        d,
        vec![
            FactorTerm::sandwich(C64::new(theta * dt, 0.0), &m0),
            FactorTerm::sandwich(C64::new(eta * dt, 0.0), &det.operator),
        ],
    )?;
    Ok((k0, k1))
}

/// Partial Kraus map `K_r` of a homodyne detector for result `r` over one step.
pub fn kraus_map_diffusive(det: &Detector, h: &ComplexMatrix, dt: f64, r: f64) -> Result<Superoperator> {
    require_kind(det, DetectorKind::Diffusive)?;
    let d = check_kraus_args(det, h, dt)?;
    let eta = det.efficiency;
    let m_r = no_click_operator(&det.operator, h, dt) + &det.operator * C64::new(eta.sqrt() * r, 0.0);
    Superoperator::from_terms(
        d,
        vec![
            FactorTerm::sandwich(ONE, &m_r),
            FactorTerm::sandwich(C64::new((1.0 - eta) * dt, 0.0), &det.operator),
        ],
    )
}

/// Generator `𝓛_j` of the generating functional for per-detector source
/// values `j` (in model detector order):
/// `𝓛 + Σ_μ (e^{j_μ} − 1)(θ_μ I + η_μ V_μ×) + Σ_ν (√η_ν j_ν L_ν+ + ½ j_ν² I)`.
pub fn deformed_generator(m: &QuantumModel, j: &[f64]) -> Result<Superoperator> {
    if j.len() != m.detectors.len() {
        return Err(Error::Superops(format!(
            "expected {} source values, got {}",
            m.detectors.len(),
            j.len()
        )));
    }
    let mut terms = lindbladian_terms(m);
    for (det, &jk) in m.detectors.iter().zip(j) {
        if jk == 0.0 {
            continue;
        }
        match det.kind {
            DetectorKind::Jump => {
                let c = C64::new(jk.exp_m1(), 0.0);
                terms.extend(jump_insertion_terms(det).into_iter().map(|mut t| {
                    t.coeff *= c;
                    t
                }));
            }
            DetectorKind::Diffusive => {
                terms.extend(plus_terms(C64::new(det.efficiency.sqrt() * jk, 0.0), &det.operator));
                terms.push(FactorTerm::scalar(C64::new(0.5 * jk * jk, 0.0)));
            }
        }
    }
    Superoperator::from_terms(m.dim, terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, trace};
    use crate::model::{model_zoo, DensityMatrix};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sigma_minus() -> ComplexMatrix {
        array![[ZERO, ZERO], [ONE, ZERO]]
    }

    fn excited() -> ComplexMatrix {
        array![[ONE, ZERO], [ZERO, ZERO]]
    }

    fn ground() -> ComplexMatrix {
        array![[ZERO, ZERO], [ZERO, ONE]]
    }

    fn random_matrix(rng: &mut impl Rng, d: usize) -> ComplexMatrix {
        ComplexMatrix::from_shape_fn((d, d), |_| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    pub(crate) fn random_state(rng: &mut impl Rng, d: usize) -> ComplexMatrix {
        let a = random_matrix(rng, d);
        let p = a.dot(&dagger(&a));
        let tr = trace(&p);
        p / tr
    }

    #[test]
    fn zero_operator_gives_zero_dissipator() {
        let d = dissipator(&ComplexMatrix::zeros((3, 3))).unwrap();
        assert!(d.terms().is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_state(&mut rng, 3);
        assert!(d.apply_to_matrix(&rho).iter().all(|z| *z == ZERO));
    }

    #[test]
    fn dissipator_on_excited_state() {
        let gamma: f64 = 0.7;
        let l = sigma_minus() * C64::new(gamma.sqrt(), 0.0);
        let out = dissipator(&l).unwrap().apply_to_matrix(&excited());
        let expected = (ground() - excited()) * C64::new(gamma, 0.0);
        assert!(max_abs_diff(&out, &expected) < 1e-15);
    }

    #[test]
    fn dissipator_is_trace_annihilating() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let l = random_matrix(&mut rng, 3);
            let rho = random_state(&mut rng, 3);
            let out = dissipator(&l).unwrap().apply_to_matrix(&rho);
            assert!(trace(&out).norm() < 1e-14);
        }
    }

    #[test]
    fn lindbladian_of_trivial_model_is_zero() {
        let m = QuantumModel::new(
            ComplexMatrix::zeros((2, 2)),
            vec![Detector::diffusive("d", ComplexMatrix::zeros((2, 2)), 1.0)],
        )
        .unwrap();
        let l = lindbladian(&m).unwrap();
        assert!(l.materialize().iter().all(|z| *z == ZERO));
    }

    #[test]
    fn lindbladian_trace_free_on_zoo() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for name in crate::model::ZOO_NAMES {
            let (m, _) = model_zoo(name).unwrap();
            let l = lindbladian(&m).unwrap();
            for _ in 0..50 {
                let rho = random_state(&mut rng, m.dim);
                assert!(trace(&l.apply_to_matrix(&rho)).norm() <= 1e-12, "{name}");
            }
        }
    }

    #[test]
    fn decay_population_closed_form() {
        let (m, rho0) = model_zoo("decay_photodetect").unwrap();
        let l = lindbladian(&m).unwrap();
        for t in [0.3, 1.0, 2.5] {
            let prop = crate::linalg::expm_dense(&(l.materialize() * C64::new(t, 0.0))).unwrap();
            let v = vectorize(rho0.matrix()).unwrap();
            let out = prop.dot(&Array1::from(v.into_data()));
            assert!((out[0].re - (-t).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn jump_insertion_examples() {
        let det = Detector::jump("d", ComplexMatrix::zeros((2, 2)), 0.6, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho = random_state(&mut rng, 2);
        let out = jump_insertion(&det).unwrap().apply_to_matrix(&rho);
        assert!(max_abs_diff(&out, &(&rho * C64::new(0.3, 0.0))) < 1e-15);

        let gamma: f64 = 1.7;
        let det = Detector::jump("d", sigma_minus() * C64::new(gamma.sqrt(), 0.0), 1.0, 0.0);
        let out = jump_insertion(&det).unwrap().apply_to_matrix(&excited());
        assert!(max_abs_diff(&out, &(ground() * C64::new(gamma, 0.0))) < 1e-14);
    }

    #[test]
    fn jump_insertion_trace_is_click_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let v = random_matrix(&mut rng, 3);
            let det = Detector::jump("d", v.clone(), 0.7, 0.2);
            let rho = random_state(&mut rng, 3);
            let out = jump_insertion(&det).unwrap().apply_to_matrix(&rho);
            let expected = 0.2 + 0.7 * trace(&v.dot(&rho).dot(&dagger(&v))).re;
            assert!((trace(&out).re - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn diff_insertion_examples() {
        let z = array![[ONE, ZERO], [ZERO, -ONE]];
        let det = Detector::diffusive("d", z, 1.0);
        let out = diff_insertion(&det).unwrap().apply_to_matrix(&ground());
        assert!(max_abs_diff(&out, &(ground() * C64::new(-2.0, 0.0))) < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let l = random_matrix(&mut rng, 3);
        let rho = random_state(&mut rng, 3);
        let det = Detector::diffusive("d", l.clone(), 0.64);
        let out = diff_insertion(&det).unwrap().apply_to_matrix(&rho);
        let expected = 0.8 * trace(&(&l + &dagger(&l)).dot(&rho));
        assert!((trace(&out) - expected).norm() < 1e-13);

        let anti = &l - &dagger(&l);
        let det = Detector::diffusive("d", anti, 0.5);
        let mixed = DensityMatrix::maximally_mixed(3);
        let out = diff_insertion(&det).unwrap().apply_to_matrix(mixed.matrix());
        assert!(trace(&out).norm() < 1e-15);
    }

    #[test]
    fn wrong_detector_kind_rejected() {
        let j = Detector::jump("j", sigma_minus(), 1.0, 0.0);
        let d = Detector::diffusive("d", sigma_minus(), 1.0);
        assert!(diff_insertion(&j).is_err());
        assert!(jump_insertion(&d).is_err());
        assert!(kraus_maps_jump(&d, &ComplexMatrix::zeros((2, 2)), 0.1).is_err());
        assert!(kraus_map_diffusive(&j, &ComplexMatrix::zeros((2, 2)), 0.1, 0.0).is_err());
    }

    #[test]
    fn kraus_jump_without_sources_has_no_click_branch() {
        let det = Detector::jump("d", ComplexMatrix::zeros((2, 2)), 0.5, 0.0);
        let (_, k1) = kraus_maps_jump(&det, &array![[ONE, ZERO], [ZERO, -ONE]], 1e-2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let out = k1.apply_to_matrix(&random_state(&mut rng, 2));
        assert!(out.iter().all(|z| *z == ZERO));
    }

    #[test]
    fn kraus_diffusive_trivial_identity() {
        let det = Detector::diffusive("d", ComplexMatrix::zeros((2, 2)), 1.0);
        let k = kraus_map_diffusive(&det, &ComplexMatrix::zeros((2, 2)), 1e-2, 0.0).unwrap();
        assert!(max_abs_diff(&k.materialize(), &identity(4)) < 1e-15);
    }

    #[test]
    fn deformed_generator_reduces_to_lindbladian() {
        for name in crate::model::ZOO_NAMES {
            let (m, _) = model_zoo(name).unwrap();
            let j = vec![0.0; m.detectors.len()];
            assert_eq!(deformed_generator(&m, &j).unwrap(), lindbladian(&m).unwrap());
        }
    }

    #[test]
    fn deformed_generator_diffusive_unit_source() {
        let (m, _) = model_zoo("qubit_homodyne_z").unwrap();
        let g = deformed_generator(&m, &[1.0]).unwrap().materialize();
        let expected = lindbladian(&m).unwrap().materialize()
            + diff_insertion(&m.detectors[0]).unwrap().materialize()
            + identity(4) * C64::new(0.5, 0.0);
        assert!(max_abs_diff(&g, &expected) < 1e-15);
    }

    #[test]
    fn deformed_generator_jump_derivative_is_insertion() {
        let (m, _) = model_zoo("driven_qubit_fluorescence").unwrap();
        let h = 1e-6;
        let plus = deformed_generator(&m, &[h]).unwrap().materialize();
        let minus = deformed_generator(&m, &[-h]).unwrap().materialize();
        let fd = (plus - minus) / C64::new(2.0 * h, 0.0);
        let ins = jump_insertion(&m.detectors[0]).unwrap().materialize();
        assert!(max_abs_diff(&fd, &ins) < 1e-8);
    }

    #[test]
    fn materialized_and_matrix_free_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for d in [2, 5, 16] {
            let h = {
                let a = random_matrix(&mut rng, d);
                &a + &dagger(&a)
            };
            let m = QuantumModel::new(
                h,
                vec![
                    Detector::jump("a", random_matrix(&mut rng, d), 0.9, 0.1),
                    Detector::diffusive("b", random_matrix(&mut rng, d), 0.5),
                ],
            )
            .unwrap();
            for op in [
                lindbladian(&m).unwrap(),
                deformed_generator(&m, &[0.3, -0.7]).unwrap(),
                jump_insertion(&m.detectors[0]).unwrap(),
                diff_insertion(&m.detectors[1]).unwrap(),
            ] {
                assert_eq!(op.form(), SuperopForm::Materialized);
                assert!(op.forms_agree(20, 1e-12));
            }
        }
    }

    #[test]
    fn large_dimension_is_matrix_free() {
        let d = MATERIALIZE_CUTOFF + 1;
        let op = dissipator(&identity(d)).unwrap();
        assert_eq!(op.form(), SuperopForm::MatrixFree);
    }

    /// Probabilists' Gauss–Hermite rule for the standard normal (exact for
    /// polynomials up to degree 9).
    const GH_NODES: [f64; 5] = [-2.856_970_013_872_806, -1.355_626_179_974_266, 0.0, 1.355_626_179_974_266, 2.856_970_013_872_806];
    const GH_WEIGHTS: [f64; 5] = [
        0.011_257_411_327_720_69,
        0.222_075_922_005_612_6,
        0.533_333_333_333_333_3,
        0.222_075_922_005_612_6,
        0.011_257_411_327_720_69,
    ];

    fn random_hermitian(rng: &mut impl Rng, d: usize) -> ComplexMatrix {
        let a = random_matrix(rng, d);
        (&a + &dagger(&a)) * C64::new(0.5, 0.0)
    }

    /// `max |K(ρ) − ρ − 𝓛(ρ)dt|` for the averaged one-step map `K`.
    fn kraus_defect(det: &Detector, h: &ComplexMatrix, rho: &ComplexMatrix, dt: f64) -> f64 {
        let m = QuantumModel::new(h.clone(), vec![det.clone()]).unwrap();
        let expected = rho + &(lindbladian(&m).unwrap().apply_to_matrix(rho) * C64::new(dt, 0.0));
        let averaged = match det.kind {
            DetectorKind::Jump => {
                let (k0, k1) = kraus_maps_jump(det, h, dt).unwrap();
                k0.apply_to_matrix(rho) + k1.apply_to_matrix(rho)
            }
            DetectorKind::Diffusive => {
                let mut acc = ComplexMatrix::zeros(rho.dim());
                for (x, w) in GH_NODES.iter().zip(GH_WEIGHTS) {
                    let k = kraus_map_diffusive(det, h, dt, x * dt.sqrt()).unwrap();
                    acc = acc + k.apply_to_matrix(rho) * C64::new(w, 0.0);
                }
                acc
            }
        };
        max_abs_diff(&averaged, &expected)
    }

    #[test]
    fn averaged_kraus_maps_have_second_order_defect() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for d in [2, 4] {
            for _ in 0..10 {
                let h = random_hermitian(&mut rng, d);
                let rho = random_state(&mut rng, d);
                let dets = [
                    Detector::jump("j", random_matrix(&mut rng, d), 0.7, 0.3),
                    Detector::diffusive("h", random_matrix(&mut rng, d), 0.6),
                ];
                for det in &dets {
                    let e: Vec<f64> = [1e-3, 5e-4, 2.5e-4].iter().map(|&dt| kraus_defect(det, &h, &rho, dt)).collect();
                    assert!(e[0] / e[1] >= 3.5 && e[1] / e[2] >= 3.5, "d={d} {:?}: {e:?}", det.kind);
                }
            }
        }
    }

    #[test]
    fn diffusive_outcome_density_is_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let d = 3;
        let h = random_hermitian(&mut rng, d);
        let det = Detector::diffusive("h", random_matrix(&mut rng, d), 0.8);
        let rho = random_state(&mut rng, d);
        for dt in [1e-2, 1e-3] {
            let total: f64 = GH_NODES
                .iter()
                .zip(GH_WEIGHTS)
                .map(|(x, w)| w * trace(&kraus_map_diffusive(&det, &h, dt, x * dt.sqrt()).unwrap().apply_to_matrix(&rho)).re)
                .sum();
            assert!((total - 1.0).abs() < 50.0 * dt * dt, "dt={dt}: {total}");
        }
    }
}
