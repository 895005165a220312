use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("linalg: {0}")]
    Linalg(#[from] LinalgError),

    #[error("model: {0}")]
    Model(#[from] ModelError),

    #[error("superops: {0}")]
    Superops(String),

    #[error("trajectories: {0}")]
    Trajectory(#[from] TrajectoryError),

    #[error("analytic: {0}")]
    Analytic(#[from] AnalyticError),

    #[error("estimator: {0}")]
    Estimator(#[from] EstimatorError),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Name of the module that raised the error, used in structured error records.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Linalg(_) => "linalg",
            Error::Model(_) => "model",
            Error::Superops(_) => "superops",
            Error::Trajectory(_) => "trajectories",
            Error::Analytic(_) => "analytic",
            Error::Estimator(_) => "estimator",
            Error::Io { .. } => "io",
        }
    }

    /// Short machine-readable kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Linalg(e) => match e {
                LinalgError::NotSquare { .. } => "not_square",
                LinalgError::DimensionMismatch { .. } => "dimension_mismatch",
                LinalgError::TooLarge { .. } => "too_large",
                LinalgError::NonFinite => "non_finite",
                LinalgError::Singular => "singular",
                LinalgError::KrylovNoConvergence { .. } => "krylov_no_convergence",
                LinalgError::InvalidArgument(_) => "invalid_argument",
            },
            Error::Model(e) => match e {
                ModelError::UnknownPrimitive(_) => "unknown_primitive",
                ModelError::DimensionMismatch { .. } => "dimension_mismatch",
                ModelError::Invalid(_) => "invalid_model",
                ModelError::InvalidState(_) => "invalid_state",
                ModelError::UnknownZooModel(_) => "unknown_zoo_model",
                ModelError::Parse(_) => "parse",
                ModelError::Expression(_) => "expression",
            },
            Error::Superops(_) => "superops",
            Error::Trajectory(e) => match e {
                TrajectoryError::InvalidGrid(_) => "invalid_grid",
                TrajectoryError::NegativeState { .. } => "negative_state",
                TrajectoryError::NonFinite { .. } => "non_finite",
            },
            Error::Analytic(e) => match e {
                AnalyticError::DuplicateTimes(_) => "duplicate_times",
                AnalyticError::UnknownDetector(_) => "unknown_detector",
                AnalyticError::TooManyLegs { .. } => "too_many_legs",
                AnalyticError::HorizonTooShort { .. } => "horizon_too_short",
                AnalyticError::InvalidWindow(_) => "invalid_window",
                AnalyticError::QuadratureNoConvergence { .. } => "quadrature_no_convergence",
                AnalyticError::Unsupported(_) => "unsupported",
                AnalyticError::GridMismatch => "grid_mismatch",
                AnalyticError::NotEnoughRecords(_) => "not_enough_records",
                AnalyticError::StepSizeUnderflow { .. } => "step_size_underflow",
            },
            Error::Estimator(e) => match e {
                EstimatorError::InvalidBinWidth(_) => "invalid_bin_width",
                EstimatorError::InvalidSpec(_) => "invalid_spec",
                EstimatorError::Request { .. } => "request_failed",
            },
            Error::Io { .. } => "io",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix of size {size} exceeds dense cutoff {cutoff}")]
    TooLarge { size: usize, cutoff: usize },
    #[error("non-finite entries")]
    NonFinite,
    #[error("singular matrix in LU solve")]
    Singular,
    #[error(
        "Krylov action did not converge: t_done={t_done:e} of {t_total:e} after {substeps} sub-steps"
    )]
    KrylovNoConvergence {
        t_done: f64,
        t_total: f64,
        substeps: usize,
    },
    #[error("{0}")]
    InvalidArgument(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown operator primitive: {0}")]
    UnknownPrimitive(String),
    #[error("dimension mismatch in {context}: {left} vs {right}")]
    DimensionMismatch {
        context: String,
        left: usize,
        right: usize,
    },
    #[error("invalid model: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<crate::model::Violation>),
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("unknown zoo model '{0}'")]
    UnknownZooModel(String),
    #[error("cannot parse model: {0}")]
    Parse(String),
    #[error("bad operator expression: {0}")]
    Expression(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("state lost positivity at step {step}: minimum eigenvalue {min_eigenvalue:e}")]
    NegativeState { step: usize, min_eigenvalue: f64 },
    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("sharp correlation times must be distinct: {0}")]
    DuplicateTimes(f64),
    #[error("unknown detector '{0}'")]
    UnknownDetector(String),
    #[error("{n} legs exceeds the configured cap of {cap}")]
    TooManyLegs { n: usize, cap: usize },
    #[error("horizon {horizon} is shorter than window support end {support_end}")]
    HorizonTooShort { horizon: f64, support_end: f64 },
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("adaptive quadrature did not reach tolerance {tol:e} within {max_evals} evaluations")]
    QuadratureNoConvergence { tol: f64, max_evals: usize },
    #[error("unsupported request: {0}")]
    Unsupported(String),
    #[error("records are not on a common time grid")]
    GridMismatch,
    #[error("need at least 2 records, got {0}")]
    NotEnoughRecords(usize),
    #[error("Runge-Kutta step size underflow at t={t}")]
    StepSizeUnderflow { t: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("invalid bin width: {0}")]
    InvalidBinWidth(String),
    #[error("invalid ensemble spec: {0}")]
    InvalidSpec(String),
    #[error("request '{id}' failed: {message}")]
    Request { id: String, message: String },
}
