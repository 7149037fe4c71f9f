//! Dense complex linear algebra for the small Hermitian systems used by the
//! per-bin least-squares solvers. Matrices are row-major `Vec<Complex<T>>`.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::num::{rl, Real};

/// Solves `A x = b` for Hermitian positive-definite `A` via Cholesky.
pub fn cholesky_solve<T: Real>(
    a: &[Complex<T>],
    b: &[Complex<T>],
    n: usize,
) -> Result<Vec<Complex<T>>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    // Lower-triangular factor L with A = L·L^H.
    let mut l = vec![Complex::new(T::zero(), T::zero()); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a[i * n + j];
            for k in 0..j {
                acc = acc - l[i * n + k] * l[j * n + k].conj();
            }
            if i == j {
                let d = acc.re;
                if !(d > T::zero()) {
                    return Err(Error::IllConditioned { lag: i });
                }
                l[i * n + i] = Complex::new(d.sqrt(), T::zero());
            } else {
                l[i * n + j] = acc / l[j * n + j];
            }
        }
    }
    // Forward substitution L y = b, then back substitution L^H x = y.
    let mut y = vec![Complex::new(T::zero(), T::zero()); n];
    for i in 0..n {
        let mut acc = b[i];
        for k in 0..i {
            acc = acc - l[i * n + k] * y[k];
        }
        y[i] = acc / l[i * n + i];
    }
    let mut x = vec![Complex::new(T::zero(), T::zero()); n];
    for i in (0..n).rev() {
        let mut acc = y[i];
        for k in i + 1..n {
            acc = acc - l[k * n + i].conj() * x[k];
        }
        x[i] = acc / l[i * n + i];
    }
    Ok(x)
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations. Returns (eigenvalues, eigenvectors as columns, row-major).
pub fn hermitian_eigen<T: Real>(a: &[Complex<T>], n: usize) -> (Vec<T>, Vec<Complex<T>>) {
    debug_assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut v = vec![Complex::new(T::zero(), T::zero()); n * n];
    for i in 0..n {
        v[i * n + i] = Complex::new(T::one(), T::zero());
    }
    let sweeps = 12 + 2 * n;
    for _ in 0..sweeps {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off = off + m[p * n + q].norm_sqr();
            }
        }
        if off <= T::epsilon() * T::epsilon() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.norm_sqr() == T::zero() {
                    continue;
                }
                // Unitary 2x2 rotation diagonalizing the (p,q) block: first a
                // phase that makes the off-diagonal real, then a real Jacobi
                // rotation by theta.
                let app = m[p * n + p].re;
                let aqq = m[q * n + q].re;
                let mag = apq.norm();
                let phase = apq / Complex::new(mag, T::zero());
                let theta = (rl::<T>(2.0) * mag).atan2(app - aqq) / rl::<T>(2.0);
                let c = theta.cos();
                let s = theta.sin();
                // Column rotation: col_p' = c·col_p + s·phase^*·col_q,
                //                  col_q' = -s·phase·col_p + c·col_q.
                let cs = Complex::new(c, T::zero());
                let sp = phase.conj() * s;
                let sq = phase * s;
                for r in 0..n {
                    let mp = m[r * n + p];
                    let mq = m[r * n + q];
                    m[r * n + p] = mp * cs + mq * sp;
                    m[r * n + q] = mq * cs - mp * sq;
                    let vp = v[r * n + p];
                    let vq = v[r * n + q];
                    v[r * n + p] = vp * cs + vq * sp;
                    v[r * n + q] = vq * cs - vp * sq;
                }
                // Matching row rotation (conjugate transpose).
                for col in 0..n {
                    let mp = m[p * n + col];
                    let mq = m[q * n + col];
                    m[p * n + col] = mp * cs.conj() + mq * sp.conj();
                    m[q * n + col] = mq * cs.conj() - mp * sq.conj();
                }
            }
        }
    }
    let eig = (0..n).map(|i| m[i * n + i].re).collect();
    (eig, v)
}

/// Minimum-norm solution of `A x = b` for Hermitian positive-semidefinite
/// `A`, using the eigendecomposition pseudo-inverse. Eigenvalues below
/// `max_eig * 1e-12` are treated as zero.
pub fn hermitian_pinv_solve<T: Real>(
    a: &[Complex<T>],
    b: &[Complex<T>],
    n: usize,
) -> Vec<Complex<T>> {
    let (eig, v) = hermitian_eigen(a, n);
    let max_eig = eig.iter().fold(T::zero(), |m, &e| m.max(e.abs()));
    let cutoff = max_eig * rl::<T>(1e-12);
    let mut x = vec![Complex::new(T::zero(), T::zero()); n];
    for j in 0..n {
        if eig[j].abs() <= cutoff {
            continue;
        }
        // Project b onto eigenvector j, scale by 1/lambda, accumulate.
        let mut proj = Complex::new(T::zero(), T::zero());
        for i in 0..n {
            proj = proj + v[i * n + j].conj() * b[i];
        }
        proj = proj / Complex::new(eig[j], T::zero());
        for i in 0..n {
            x[i] = x[i] + v[i * n + j] * proj;
        }
    }
    x
}
