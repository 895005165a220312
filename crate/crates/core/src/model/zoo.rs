//! Reference models used by tests, the comparison suite and the CLI.
//!
//! Two-level systems use `|e⟩ = |0⟩`, `|g⟩ = |1⟩`, so that `σ_z = diag(1, −1)`
//! has `σ_z|g⟩ = −|g⟩` and `σ₋ = |g⟩⟨e|`. All rates are in units of the decay
//! rate γ (or the cavity linewidth κ), and times in units of 1/γ.

use super::operator::{build_operator, OperatorExpr as E};
use super::{Detector, DensityMatrix, QuantumModel};
use crate::error::ModelError;
use crate::linalg::ComplexMatrix;

pub const ZOO_NAMES: &[&str] = &[
    "decay_photodetect",
    "qubit_homodyne_z",
    "driven_qubit_fluorescence",
    "cavity_heterodyne",
    "mixed_two_detector",
    "pure_noise",
];

const EXCITED: usize = 0;
const GROUND: usize = 1;

fn sigma_minus() -> E {
    E::Projector {
        i: GROUND,
        j: EXCITED,
        dim: 2,
    }
}

fn op(e: &E) -> ComplexMatrix {
    build_operator(e).expect("zoo expressions are well formed")
}

/// Look up a fixture by name.
///
/// * `decay_photodetect`: H = 0, photodetector V = √γ σ₋ with γ = 1,
///   η = 0.8, θ = 0.05; starts in |e⟩.
/// * `qubit_homodyne_z`: H = 0, homodyne L = σ_z with η = 1; starts in |g⟩.
/// * `driven_qubit_fluorescence`: H = (Ω/2) σ_x with Ω = 2, photodetector
///   V = σ₋, η = 0.7, θ = 0.02; starts in |g⟩.
/// * `cavity_heterodyne`: 4-level truncated cavity, H = Δ a†a + ε (a + a†)
///   with Δ = 0.5, ε = 0.3, heterodyne as two homodyne channels
///   `x`: √(κ/2) a and `y`: −i √(κ/2) a, κ = 1, η = 0.9 each; starts in vacuum.
/// * `mixed_two_detector`: H = (Ω/2) σ_x with Ω = 1, photodetector `jump`
///   V = σ₋ (η = 0.8, θ = 0.05) and homodyne `homodyne` L = √0.5 σ_z
///   (η = 0.9); starts in |e⟩.
/// * `pure_noise`: two-level system with a single homodyne channel L = 0,
///   whose record is pure Wiener noise; starts in |g⟩.
pub fn model_zoo(name: &str) -> Result<(QuantumModel, DensityMatrix), ModelError> {
    let zero2 = ComplexMatrix::zeros((2, 2));
    let (model, rho0) = match name {
        "decay_photodetect" => {
            let gamma: f64 = 1.0;
            let v = op(&E::scale(gamma.sqrt(), sigma_minus()));
            (
                QuantumModel::new(zero2, vec![Detector::jump("d0", v, 0.8, 0.05)])?,
                DensityMatrix::basis(2, EXCITED)?,
            )
        }
        "qubit_homodyne_z" => (
            QuantumModel::new(zero2, vec![Detector::diffusive("d0", op(&E::PauliZ), 1.0)])?,
            DensityMatrix::basis(2, GROUND)?,
        ),
        "driven_qubit_fluorescence" => {
            let omega = 2.0;
            let h = op(&E::scale(omega / 2.0, E::PauliX));
            (
                QuantumModel::new(h, vec![Detector::jump("d0", op(&sigma_minus()), 0.7, 0.02)])?,
                DensityMatrix::basis(2, GROUND)?,
            )
        }
        "cavity_heterodyne" => {
            let d = 4;
            let (kappa, delta, drive): (f64, f64, f64) = (1.0, 0.5, 0.3);
            let a = E::Annihilation { dim: d };
            let number = E::product(vec![E::adjoint(a.clone()), a.clone()]);
            let h = op(&E::sum(vec![
                E::scale(delta, number),
                E::scale(drive, E::sum(vec![a.clone(), E::adjoint(a.clone())])),
            ]));
            let amp = (kappa / 2.0).sqrt();
            let lx = op(&E::scale(amp, a.clone()));
            let ly = op(&E::scale(super::Scalar::Complex([0.0, -amp]), a));
            (
                QuantumModel::new(
                    h,
                    vec![
                        Detector::diffusive("x", lx, 0.9),
                        Detector::diffusive("y", ly, 0.9),
                    ],
                )?,
                DensityMatrix::basis(d, 0)?,
            )
        }
        "mixed_two_detector" => {
            let h = op(&E::scale(0.5, E::PauliX));
            let v = op(&sigma_minus());
            let l = op(&E::scale(0.5f64.sqrt(), E::PauliZ));
            (
                QuantumModel::new(
                    h,
                    vec![
                        Detector::jump("jump", v, 0.8, 0.05),
                        Detector::diffusive("homodyne", l, 0.9),
                    ],
                )?,
                DensityMatrix::basis(2, EXCITED)?,
            )
        }
        "pure_noise" => (
            QuantumModel::new(zero2.clone(), vec![Detector::diffusive("d0", zero2, 1.0)])?,
            DensityMatrix::basis(2, GROUND)?,
        ),
        other => return Err(ModelError::UnknownZooModel(other.to_string())),
    };
    Ok((model, rho0))
}
