//! Dense complex linear algebra, density-matrix vectorization and
//! matrix-exponential actions.
//!
//! Vectorization is column-stacking everywhere in this crate:
//! `data[i + d*j] = m[i, j]`, so that `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.

mod expm;
mod krylov;

use ndarray::{Array2, ArrayView2, ShapeBuilder};
use num_complex::Complex64;

use crate::error::LinalgError;

pub use expm::{expm_dense, expm_dense_with_cutoff, lu_solve, DEFAULT_DENSE_CUTOFF};
pub use krylov::{expm_action, expm_action_op, KrylovConfig, KrylovStats, LinearOperator};

pub type C64 = Complex64;

/// Dense complex matrix, row-major storage.
pub type ComplexMatrix = Array2<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// A d×d matrix flattened by column stacking.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorizedState {
    dim: usize,
    data: Vec<C64>,
}

impl VectorizedState {
    pub fn from_data(dim: usize, data: Vec<C64>) -> Result<Self, LinalgError> {
        if data.len() != dim * dim {
            return Err(LinalgError::DimensionMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    /// Zero-copy view as a d×d matrix.
    pub fn as_matrix(&self) -> ArrayView2<'_, C64> {
        ArrayView2::from_shape((self.dim, self.dim).f(), &self.data)
            .expect("length checked at construction")
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.data[i + self.dim * i]).sum()
    }

    pub fn norm(&self) -> f64 {
        vec_norm(&self.data)
    }
}

/// Column-stack a square matrix.
pub fn vectorize(m: &ComplexMatrix) -> Result<VectorizedState, LinalgError> {
    let (rows, cols) = m.dim();
    if rows != cols {
        return Err(LinalgError::NotSquare { rows, cols });
    }
    // Iterating the transpose in logical order walks m column by column.
    let data = m.t().iter().copied().collect();
    Ok(VectorizedState { dim: rows, data })
}

pub fn devectorize(v: &VectorizedState) -> ComplexMatrix {
    v.as_matrix().to_owned().as_standard_layout().to_owned()
}

pub fn dagger(m: &ComplexMatrix) -> ComplexMatrix {
    m.t().mapv(|z| z.conj())
}

pub fn identity(d: usize) -> ComplexMatrix {
    Array2::eye(d)
}

pub fn trace(m: &ComplexMatrix) -> C64 {
    m.diag().sum()
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let s = a[[i, j]];
            if s == ZERO {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = s * b[[k, l]];
                }
            }
        }
    }
    out
}

pub fn frobenius_norm(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Induced 1-norm (maximum absolute column sum).
pub fn one_norm(m: &ComplexMatrix) -> f64 {
    m.columns()
        .into_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// `max |m - m†|` entrywise.
pub fn hermiticity_defect(m: &ComplexMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    worst
}

pub fn hermitize(m: &ComplexMatrix) -> ComplexMatrix {
    (m + &dagger(m)) * C64::new(0.5, 0.0)
}

pub fn all_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Vec<f64> {
    let n = m.nrows();
    let h = nalgebra::DMatrix::from_fn(n, n, |i, j| m[[i, j]]);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Hermitian eigendecomposition `(eigenvalues, eigenvectors-as-columns)`.
pub fn hermitian_eigen(m: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let n = m.nrows();
    let h = nalgebra::DMatrix::from_fn(n, n, |i, j| m[[i, j]]);
    let eig = h.symmetric_eigen();
    let vals = eig.eigenvalues.iter().copied().collect();
    let vecs = Array2::from_shape_fn((n, n), |(i, j)| eig.eigenvectors[(i, j)]);
    (vals, vecs)
}

pub(crate) fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn vec_dot(a: &[C64], b: &[C64]) -> C64 {
    // ⟨a, b⟩ conjugate-linear in a
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn vec_axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
