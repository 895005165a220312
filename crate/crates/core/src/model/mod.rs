//! Physical system description: Hamiltonian, detectors and states.

mod file;
mod operator;
mod zoo;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::linalg::{
    all_finite, frobenius_norm, hermitian_eigen, hermitian_eigenvalues, hermiticity_defect,
    hermitize, trace, ComplexMatrix, C64,
};

pub use file::{load_model_file, DetectorSpec, ModelFile, OperatorSpec, StateSpec};
pub use operator::{build_operator, matrix_from_rows, matrix_to_rows, MatrixRows, OperatorExpr, Scalar};
pub use zoo::{model_zoo, ZOO_NAMES};

/// Relative Hermiticity tolerance for Hamiltonians.
pub const HAMILTONIAN_HERMITICITY_TOL: f64 = 1e-12;
/// Absolute Hermiticity and trace tolerance for density matrices.
pub const STATE_TOL: f64 = 1e-12;
/// Most negative eigenvalue accepted for a density matrix.
pub const STATE_MIN_EIGENVALUE: f64 = -1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    /// Photon counting: the record is a point process `dN`.
    Jump,
    /// Homodyne-type: the record is a drifted Wiener increment.
    Diffusive,
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectorKind::Jump => f.write_str("jump"),
            DetectorKind::Diffusive => f.write_str("diffusive"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub label: String,
    pub kind: DetectorKind,
    /// Measurement operator (`V` for jump detectors, `L` for diffusive ones).
    pub operator: ComplexMatrix,
    /// Efficiency η in (0, 1].
    pub efficiency: f64,
    /// Dark count rate θ ≥ 0. Must be zero for diffusive detectors.
    pub dark_rate: f64,
}

impl Detector {
    pub fn jump(label: impl Into<String>, operator: ComplexMatrix, efficiency: f64, dark_rate: f64) -> Self {
        Self {
            label: label.into(),
            kind: DetectorKind::Jump,
            operator,
            efficiency,
            dark_rate,
        }
    }

    pub fn diffusive(label: impl Into<String>, operator: ComplexMatrix, efficiency: f64) -> Self {
        Self {
            label: label.into(),
            kind: DetectorKind::Diffusive,
            operator,
            efficiency,
            dark_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumModel {
    pub dim: usize,
    pub hamiltonian: ComplexMatrix,
    pub detectors: Vec<Detector>,
}

impl QuantumModel {
    /// Build and validate.
    pub fn new(hamiltonian: ComplexMatrix, detectors: Vec<Detector>) -> Result<Self, ModelError> {
        let model = Self {
            dim: hamiltonian.nrows(),
            hamiltonian,
            detectors,
        };
        model.validated()
    }

    pub fn validated(self) -> Result<Self, ModelError> {
        let violations = validate_model(&self);
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(ModelError::Invalid(violations))
        }
    }

    pub fn detector_index(&self, label: &str) -> Option<usize> {
        self.detectors.iter().position(|d| d.label == label)
    }

    pub fn detector(&self, label: &str) -> Option<&Detector> {
        self.detectors.iter().find(|d| d.label == label)
    }
}

/// A single failed model invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Check every model invariant; an empty list means the model is valid.
pub fn validate_model(m: &QuantumModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let d = m.dim;
    if d == 0 {
        out.push(Violation::new("dim", "Hilbert dimension must be at least 1"));
    }
    if m.hamiltonian.dim() != (d, d) {
        out.push(Violation::new(
            "hamiltonian",
            format!("shape {:?} does not match dimension {d}", m.hamiltonian.dim()),
        ));
    } else if !all_finite(&m.hamiltonian) {
        out.push(Violation::new("hamiltonian", "non-finite entries"));
    } else {
        let defect = hermiticity_defect(&m.hamiltonian);
        let scale = frobenius_norm(&m.hamiltonian);
        if defect > HAMILTONIAN_HERMITICITY_TOL * scale.max(f64::MIN_POSITIVE) && defect > 0.0 {
            out.push(Violation::new(
                "hamiltonian",
                format!("not Hermitian: max |H - H†| = {defect:e}"),
            ));
        }
    }
    if m.detectors.is_empty() {
        out.push(Violation::new("detectors", "at least one detector is required"));
    }
    for (k, det) in m.detectors.iter().enumerate() {
        let field = |name: &str| format!("detectors[{k}].{name}");
        if det.label.is_empty() {
            out.push(Violation::new(field("label"), "empty label"));
        }
        if m.detectors[..k].iter().any(|o| o.label == det.label) {
            out.push(Violation::new(
                field("label"),
                format!("duplicate label '{}'", det.label),
            ));
        }
        if !(det.efficiency > 0.0 && det.efficiency <= 1.0) {
            out.push(Violation::new(
                field("efficiency"),
                format!("efficiency {} outside (0, 1]", det.efficiency),
            ));
        }
        if !(det.dark_rate >= 0.0 && det.dark_rate.is_finite()) {
            out.push(Violation::new(
                field("dark_rate"),
                format!("dark rate {} must be finite and >= 0", det.dark_rate),
            ));
        }
        if det.kind == DetectorKind::Diffusive && det.dark_rate != 0.0 {
            out.push(Violation::new(
                field("dark_rate"),
                "dark rate is only meaningful for jump detectors",
            ));
        }
        if det.operator.dim() != (d, d) {
            out.push(Violation::new(
                field("operator"),
                format!("shape {:?} does not match dimension {d}", det.operator.dim()),
            ));
        } else if !all_finite(&det.operator) {
            out.push(Violation::new(field("operator"), "non-finite entries"));
        }
    }
    out
}

/// Unit-trace positive semidefinite Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self, ModelError> {
        let (r, c) = matrix.dim();
        if r != c || r == 0 {
            return Err(ModelError::InvalidState(format!("shape {r}x{c} is not square")));
        }
        if !all_finite(&matrix) {
            return Err(ModelError::InvalidState("non-finite entries".into()));
        }
        let herm = hermiticity_defect(&matrix);
        if herm > STATE_TOL {
            return Err(ModelError::InvalidState(format!(
                "not Hermitian: defect {herm:e}"
            )));
        }
        let tr = trace(&matrix);
        if (tr - C64::new(1.0, 0.0)).norm() > STATE_TOL {
            return Err(ModelError::InvalidState(format!("trace {tr} is not 1")));
        }
        let min_ev = hermitian_eigenvalues(&matrix)[0];
        if min_ev < STATE_MIN_EIGENVALUE {
            return Err(ModelError::InvalidState(format!(
                "negative eigenvalue {min_ev:e}"
            )));
        }
        Ok(Self { matrix })
    }

    /// Pure state `|ψ⟩⟨ψ|`; the ket is normalized first.
    pub fn from_ket(ket: &[C64]) -> Result<Self, ModelError> {
        let norm = ket.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if ket.is_empty() || !(norm > 0.0) || !norm.is_finite() {
            return Err(ModelError::InvalidState("ket has zero or non-finite norm".into()));
        }
        let n = ket.len();
        let m = ComplexMatrix::from_shape_fn((n, n), |(i, j)| ket[i] * ket[j].conj() / (norm * norm));
        Self::new(hermitize(&m))
    }

    /// `|i⟩⟨i|` in dimension `d`.
    pub fn basis(d: usize, i: usize) -> Result<Self, ModelError> {
        if i >= d {
            return Err(ModelError::InvalidState(format!(
                "basis index {i} out of range for dimension {d}"
            )));
        }
        let mut m = ComplexMatrix::zeros((d, d));
        m[[i, i]] = C64::new(1.0, 0.0);
        Ok(Self { matrix: m })
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self {
            matrix: crate::linalg::identity(d) / C64::new(d as f64, 0.0),
        }
    }

    /// Project a nearly-physical matrix back onto the state manifold:
    /// Hermitize, clip eigenvalues at zero and renormalize. Returns the
    /// state together with the most negative eigenvalue found before clipping.
    pub fn project(matrix: &ComplexMatrix) -> Result<(Self, f64), ModelError> {
        if !all_finite(matrix) {
            return Err(ModelError::InvalidState("non-finite entries".into()));
        }
        let h = hermitize(matrix);
        let (vals, vecs) = hermitian_eigen(&h);
        let min_ev = vals.iter().copied().fold(f64::INFINITY, f64::min);
        if min_ev >= 0.0 {
            let tr = trace(&h).re;
            return Ok((Self { matrix: h / C64::new(tr, 0.0) }, min_ev));
        }
        let n = h.nrows();
        let mut out = ComplexMatrix::zeros((n, n));
        for (k, &lam) in vals.iter().enumerate() {
            if lam <= 0.0 {
                continue;
            }
            for i in 0..n {
                for j in 0..n {
                    out[[i, j]] += vecs[[i, k]] * vecs[[j, k]].conj() * lam;
                }
            }
        }
        let tr = trace(&out).re;
        if !(tr > 0.0) {
            return Err(ModelError::InvalidState("no positive spectral weight".into()));
        }
        Ok((Self { matrix: hermitize(&out) / C64::new(tr, 0.0) }, min_ev))
    }

    pub(crate) fn from_trusted(matrix: ComplexMatrix) -> Self {
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.matrix)[0]
    }

    /// `Tr[ρ A]`.
    pub fn expectation(&self, a: &ComplexMatrix) -> C64 {
        trace(&self.matrix.dot(a))
    }
}
