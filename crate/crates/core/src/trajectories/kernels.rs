//! Allocation-free kernels on small row-major `d × d` matrices stored as flat
//! slices. The trajectory steppers call these millions of times per run.

use crate::linalg::{ComplexMatrix, C64, ZERO};

pub(crate) fn from_array(m: &ComplexMatrix) -> Vec<C64> {
    m.iter().copied().collect()
}

pub(crate) fn to_array(a: &[C64], d: usize) -> ComplexMatrix {
    ComplexMatrix::from_shape_fn((d, d), |(i, j)| a[i * d + j])
}

#[cfg(test)]
pub(crate) fn adjoint(a: &[C64], d: usize) -> Vec<C64> {
    let mut out = vec![ZERO; d * d];
    adjoint_into(a, &mut out, d);
    out
}

#[inline]
pub(crate) fn adjoint_into(a: &[C64], out: &mut [C64], d: usize) {
    for i in 0..d {
        for j in 0..d {
            out[j * d + i] = a[i * d + j].conj();
        }
    }
}

/// `out = a · b`.
#[inline]
pub(crate) fn mul_into(a: &[C64], b: &[C64], out: &mut [C64], d: usize) {
    for i in 0..d {
        let row = &a[i * d..(i + 1) * d];
        for j in 0..d {
            let mut acc = ZERO;
            for k in 0..d {
                acc += row[k] * b[k * d + j];
            }
            out[i * d + j] = acc;
        }
    }
}

/// `out += c · a · rho · a_adj`, using `tmp` as scratch.
#[inline]
pub(crate) fn sandwich_add(
    c: f64,
    a: &[C64],
    rho: &[C64],
    a_adj: &[C64],
    tmp: &mut [C64],
    out: &mut [C64],
    d: usize,
) {
    mul_into(a, rho, tmp, d);
    for i in 0..d {
        for j in 0..d {
            let mut acc = ZERO;
            for k in 0..d {
                acc += tmp[i * d + k] * a_adj[k * d + j];
            }
            out[i * d + j] += acc * c;
        }
    }
}

/// `Tr[a · rho]`.
#[inline]
pub(crate) fn trace_prod(a: &[C64], rho: &[C64], d: usize) -> C64 {
    let mut acc = ZERO;
    for i in 0..d {
        for k in 0..d {
            acc += a[i * d + k] * rho[k * d + i];
        }
    }
    acc
}

#[inline]
pub(crate) fn trace(a: &[C64], d: usize) -> C64 {
    (0..d).map(|i| a[i * d + i]).sum()
}

/// Hermitize and rescale to unit trace in place. Returns the trace before
/// rescaling.
#[inline]
pub(crate) fn hermitize_normalize(a: &mut [C64], d: usize) -> f64 {
    for i in 0..d {
        a[i * d + i].im = 0.0;
        for j in i + 1..d {
            let avg = (a[i * d + j] + a[j * d + i].conj()) * 0.5;
            a[i * d + j] = avg;
            a[j * d + i] = avg.conj();
        }
    }
    let tr = trace(a, d).re;
    let inv = 1.0 / tr;
    a.iter_mut().for_each(|z| *z *= inv);
    tr
}

/// Smallest eigenvalue of a Hermitian matrix when it is negative, else 0.
/// Closed form for `d ≤ 2`; otherwise an `LDL†` pass decides positivity and
/// only indefinite inputs pay for an eigendecomposition.
pub(crate) fn negative_part(a: &[C64], d: usize, scratch: &mut [C64]) -> f64 {
    match d {
        1 => a[0].re.min(0.0),
        2 => {
            let (p, q) = (a[0].re, a[3].re);
            let half_gap = (0.25 * (p - q) * (p - q) + a[1].norm_sqr()).sqrt();
            (0.5 * (p + q) - half_gap).min(0.0)
        }
        _ => {
            scratch.copy_from_slice(a);
            if ldl_is_positive(scratch, d) {
                0.0
            } else {
                crate::linalg::hermitian_eigenvalues(&to_array(a, d))[0].min(0.0)
            }
        }
    }
}

fn ldl_is_positive(m: &mut [C64], d: usize) -> bool {
    for k in 0..d {
        let pivot = m[k * d + k].re;
        if pivot < 0.0 {
            return false;
        }
        if pivot == 0.0 {
            if (k + 1..d).any(|i| m[i * d + k].norm() > 0.0) {
                return false;
            }
            continue;
        }
        for i in k + 1..d {
            let f = m[i * d + k] / pivot;
            for j in k + 1..d {
                let mkj = m[k * d + j];
                m[i * d + j] -= f * mkj;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dagger;
    use rand::{Rng, SeedableRng};

    fn random(rng: &mut impl Rng, d: usize) -> ComplexMatrix {
        ComplexMatrix::from_shape_fn((d, d), |_| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn kernels_match_ndarray() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for d in [1, 2, 3, 5] {
            let a = random(&mut rng, d);
            let b = random(&mut rng, d);
            let (fa, fb) = (from_array(&a), from_array(&b));
            let mut out = vec![ZERO; d * d];
            mul_into(&fa, &fb, &mut out, d);
            assert!(crate::linalg::max_abs_diff(&to_array(&out, d), &a.dot(&b)) < 1e-14);

            let mut acc = vec![ZERO; d * d];
            let mut tmp = vec![ZERO; d * d];
            sandwich_add(0.5, &fa, &fb, &adjoint(&fa, d), &mut tmp, &mut acc, d);
            let expected = a.dot(&b).dot(&dagger(&a)) * C64::new(0.5, 0.0);
            assert!(crate::linalg::max_abs_diff(&to_array(&acc, d), &expected) < 1e-14);

            let tp = trace_prod(&fa, &fb, d);
            assert!((tp - crate::linalg::trace(&a.dot(&b))).norm() < 1e-14);
        }
    }

    #[test]
    fn negative_part_detects_indefinite() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for d in [1, 2, 3, 4] {
            for _ in 0..50 {
                let a = random(&mut rng, d);
                let h = &a + &dagger(&a);
                let fh = from_array(&h);
                let mut scratch = vec![ZERO; d * d];
                let min = crate::linalg::hermitian_eigenvalues(&h)[0];
                let neg = negative_part(&fh, d, &mut scratch);
                if min < -1e-12 {
                    assert!((neg - min).abs() < 1e-10, "d={d} {neg} vs {min}");
                } else if min > 1e-12 {
                    assert_eq!(neg, 0.0);
                }
            }
        }
    }

    #[test]
    fn normalization() {
        let mut a = vec![
            C64::new(2.0, 0.1),
            C64::new(0.0, 1.0),
            C64::new(0.0, -0.5),
            C64::new(2.0, 0.0),
        ];
        let tr = hermitize_normalize(&mut a, 2);
        assert_eq!(tr, 4.0);
        assert_eq!(a[0], C64::new(0.5, 0.0));
        assert_eq!(a[1], a[2].conj());
    }
}
