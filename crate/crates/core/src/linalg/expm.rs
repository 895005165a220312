//! Dense matrix exponential by scaling and squaring with Padé approximants
//! (Higham 2005 degree selection).

use ndarray::Array2;

use super::{identity, one_norm, ComplexMatrix, C64, ZERO};
use crate::error::LinalgError;

/// Largest matrix order handled by the dense route (Hilbert dimension 64).
pub const DEFAULT_DENSE_CUTOFF: usize = 4096;

const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539398330063230e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

const B3: [f64; 4] = [120., 60., 12., 1.];
const B5: [f64; 6] = [30240., 15120., 3360., 420., 30., 1.];
const B7: [f64; 8] = [17297280., 8648640., 1995840., 277200., 25200., 1512., 56., 1.];
const B9: [f64; 10] = [
    17643225600.,
    8821612800.,
    2075673600.,
    302702400.,
    30270240.,
    2162160.,
    110880.,
    3960.,
    90.,
    1.,
];
const B13: [f64; 14] = [
    64764752532480000.,
    32382376266240000.,
    7771770303897600.,
    1187353796428800.,
    129060195264000.,
    10559470521600.,
    670442572800.,
    33522128640.,
    1323241920.,
    40840800.,
    960960.,
    16380.,
    182.,
    1.,
];

pub fn expm_dense(a: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    expm_dense_with_cutoff(a, DEFAULT_DENSE_CUTOFF)
}

pub fn expm_dense_with_cutoff(
    a: &ComplexMatrix,
    cutoff: usize,
) -> Result<ComplexMatrix, LinalgError> {
    let (rows, cols) = a.dim();
    if rows != cols {
        return Err(LinalgError::NotSquare { rows, cols });
    }
    if rows > cutoff {
        return Err(LinalgError::TooLarge { size: rows, cutoff });
    }
    if !super::all_finite(a) {
        return Err(LinalgError::NonFinite);
    }
    let n = rows;
    let norm = one_norm(a);
    let eye = identity(n);

    if norm <= THETA_9 {
        let a2 = a.dot(a);
        let (u, v) = if norm <= THETA_3 {
            odd_even(a, &eye, &[&a2], &B3)
        } else if norm <= THETA_5 {
            let a4 = a2.dot(&a2);
            odd_even(a, &eye, &[&a2, &a4], &B5)
        } else if norm <= THETA_7 {
            let a4 = a2.dot(&a2);
            let a6 = a4.dot(&a2);
            odd_even(a, &eye, &[&a2, &a4, &a6], &B7)
        } else {
            let a4 = a2.dot(&a2);
            let a6 = a4.dot(&a2);
            let a8 = a6.dot(&a2);
            odd_even(a, &eye, &[&a2, &a4, &a6, &a8], &B9)
        };
        return pade_solve(&u, &v);
    }

    let s = ((norm / THETA_13).log2().ceil()).max(0.0) as i32;
    let scaled = a * C64::new(2f64.powi(-s), 0.0);
    let a2 = scaled.dot(&scaled);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let b = |k: usize| C64::new(B13[k], 0.0);

    let inner_u = &a6 * b(13) + &a4 * b(11) + &a2 * b(9);
    let u_poly = a6.dot(&inner_u) + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &eye * b(1);
    let u = scaled.dot(&u_poly);
    let inner_v = &a6 * b(12) + &a4 * b(10) + &a2 * b(8);
    let v = a6.dot(&inner_v) + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &eye * b(0);

    let mut r = pade_solve(&u, &v)?;
    for _ in 0..s {
        r = r.dot(&r);
    }
    Ok(r)
}

/// Odd part `U = A Σ b_{2k+1} A^{2k}` and even part `V = Σ b_{2k} A^{2k}`.
fn odd_even(
    a: &ComplexMatrix,
    eye: &ComplexMatrix,
    powers: &[&ComplexMatrix],
    b: &[f64],
) -> (ComplexMatrix, ComplexMatrix) {
    let mut u = eye * C64::new(b[1], 0.0);
    let mut v = eye * C64::new(b[0], 0.0);
    for (k, p) in powers.iter().enumerate() {
        u = u + *p * C64::new(b[2 * k + 3], 0.0);
        v = v + *p * C64::new(b[2 * k + 2], 0.0);
    }
    (a.dot(&u), v)
}

fn pade_solve(u: &ComplexMatrix, v: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    let p = v + u;
    let q = v - u;
    lu_solve(&q, &p)
}

/// Solve `A X = B` by LU factorization with partial pivoting.
pub fn lu_solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LinalgError::NotSquare {
            rows: n,
            cols: a.ncols(),
        });
    }
    if b.nrows() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            found: b.nrows(),
        });
    }
    let mut lu = a.clone();
    let mut x = b.clone();
    let m = x.ncols();

    for k in 0..n {
        let (piv, pmax) = (k..n)
            .map(|i| (i, lu[[i, k]].norm()))
            .fold((k, -1.0), |acc, e| if e.1 > acc.1 { e } else { acc });
        if pmax == 0.0 || !pmax.is_finite() {
            return Err(LinalgError::Singular);
        }
        if piv != k {
            for j in 0..n {
                lu.swap([k, j], [piv, j]);
            }
            for j in 0..m {
                x.swap([k, j], [piv, j]);
            }
        }
        let pivot = lu[[k, k]];
        for i in (k + 1)..n {
            let f = lu[[i, k]] / pivot;
            if f == ZERO {
                continue;
            }
            lu[[i, k]] = f;
            for j in (k + 1)..n {
                let t = lu[[k, j]];
                lu[[i, j]] -= f * t;
            }
            for j in 0..m {
                let t = x[[k, j]];
                x[[i, j]] -= f * t;
            }
        }
    }
    let mut out = Array2::zeros((n, m));
    for j in 0..m {
        for i in (0..n).rev() {
            let mut s = x[[i, j]];
            for k in (i + 1)..n {
                s -= lu[[i, k]] * out[[k, j]];
            }
            out[[i, j]] = s / lu[[i, i]];
        }
    }
    Ok(out)
}
