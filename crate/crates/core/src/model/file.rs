//! JSON model files.
//!
//! ```json
//! {
//!   "dim": 2,
//!   "hamiltonian": [[[0,0],[0,0]],[[0,0],[0,0]]],
//!   "detectors": [
//!     {"label": "d0", "kind": "jump", "eta": 0.8, "theta": 0.05,
//!      "operator": {"op": "projector", "i": 1, "j": 0, "dim": 2}}
//!   ],
//!   "initial_state": {"basis": 0}
//! }
//! ```
//!
//! Operators are either dense matrices (nested rows of `[re, im]`) or
//! operator expressions; states are `{"ket": [...]}`, `{"density": [...]}`
//! or `{"basis": i}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::operator::{build_operator, matrix_from_rows, matrix_to_rows, MatrixRows, OperatorExpr};
use super::{Detector, DetectorKind, DensityMatrix, QuantumModel};
use crate::error::{Error, ModelError};
use crate::linalg::{ComplexMatrix, C64};

/// Operator field: a dense matrix or an operator expression, kept as raw
/// JSON so that files round-trip unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OperatorSpec(pub serde_json::Value);

impl OperatorSpec {
    pub fn dense(m: &ComplexMatrix) -> Self {
        OperatorSpec(serde_json::to_value(matrix_to_rows(m)).expect("plain numbers serialize"))
    }

    pub fn expr(e: &OperatorExpr) -> Self {
        OperatorSpec(serde_json::to_value(e).expect("expression serializes"))
    }

    pub fn build(&self) -> Result<ComplexMatrix, ModelError> {
        if self.0.is_array() {
            let rows: MatrixRows = serde_json::from_value(self.0.clone())
                .map_err(|e| ModelError::Parse(format!("dense matrix: {e}")))?;
            matrix_from_rows(&rows)
        } else {
            build_operator(&OperatorExpr::from_json(&self.0)?)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub label: String,
    pub kind: DetectorKind,
    pub operator: OperatorSpec,
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSpec {
    Ket(Vec<[f64; 2]>),
    Density(MatrixRows),
    Basis(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub hamiltonian: OperatorSpec,
    pub detectors: Vec<DetectorSpec>,
    pub initial_state: StateSpec,
}

impl ModelFile {
    pub fn from_json_str(s: &str) -> Result<Self, ModelError> {
        serde_json::from_str(s).map_err(|e| ModelError::Parse(e.to_string()))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("model file serializes")
    }

    /// Dense snapshot of an in-memory model.
    pub fn from_model(model: &QuantumModel, rho0: &DensityMatrix, description: Option<String>) -> Self {
        Self {
            dim: model.dim,
            description,
            hamiltonian: OperatorSpec::dense(&model.hamiltonian),
            detectors: model
                .detectors
                .iter()
                .map(|d| DetectorSpec {
                    label: d.label.clone(),
                    kind: d.kind,
                    operator: OperatorSpec::dense(&d.operator),
                    eta: d.efficiency,
                    theta: match d.kind {
                        DetectorKind::Jump => Some(d.dark_rate),
                        DetectorKind::Diffusive => None,
                    },
                })
                .collect(),
            initial_state: StateSpec::Density(matrix_to_rows(rho0.matrix())),
        }
    }

    /// Build and validate the model and initial state.
    pub fn to_model(&self) -> Result<(QuantumModel, DensityMatrix), ModelError> {
        let hamiltonian = self.hamiltonian.build()?;
        let mut detectors = Vec::with_capacity(self.detectors.len());
        for spec in &self.detectors {
            let operator = spec.operator.build()?;
            detectors.push(Detector {
                label: spec.label.clone(),
                kind: spec.kind,
                operator,
                efficiency: spec.eta,
                dark_rate: spec.theta.unwrap_or(0.0),
            });
        }
        let model = QuantumModel {
            dim: self.dim,
            hamiltonian,
            detectors,
        }
        .validated()?;

        let rho0 = match &self.initial_state {
            StateSpec::Ket(amps) => {
                let ket: Vec<C64> = amps.iter().map(|[re, im]| C64::new(*re, *im)).collect();
                DensityMatrix::from_ket(&ket)?
            }
            StateSpec::Density(rows) => DensityMatrix::new(matrix_from_rows(rows)?)?,
            StateSpec::Basis(i) => DensityMatrix::basis(self.dim, *i)?,
        };
        if rho0.dim() != self.dim {
            return Err(ModelError::DimensionMismatch {
                context: "initial_state".into(),
                left: self.dim,
                right: rho0.dim(),
            });
        }
        Ok((model, rho0))
    }
}

pub fn load_model_file(path: &Path) -> Result<(QuantumModel, DensityMatrix), Error> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(ModelFile::from_json_str(&text)?.to_model()?)
}
