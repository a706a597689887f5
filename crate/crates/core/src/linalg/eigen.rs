//! Hermitian eigendecomposition by cyclic Jacobi rotations.
//!
//! Jacobi is the right tool at the dimensions this crate targets: the
//! eigenvector matrix is a product of exact unitary rotations, so its
//! orthonormality is limited only by round-off. Matrix exponentials built
//! from it inherit that unitarity.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::tol;

const MAX_SWEEPS: usize = 60;

/// Decompose a Hermitian matrix as `h = v diag(values) v^dag` with `values`
/// ascending and `v` unitary.
///
/// The input is not checked for Hermiticity here; callers that accept
/// untrusted matrices do that first.
pub fn eigh(h: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    let n = h.dim();
    let mut a = h.clone();
    let mut v = ComplexMatrix::identity(n);
    let scale = a.hs_norm().max(f64::MIN_POSITIVE);

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) <= tol::TOL_EIG_OFFDIAG * 1e-2 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }
    if !converged && off_diagonal_norm(&a) > tol::TOL_EIG_OFFDIAG * scale {
        return Err(Error::EigenFailed {
            residual: off_diagonal_norm(&a),
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    let values_raw: Vec<f64> = (0..n).map(|i| a.get(i, i).re).collect();
    order.sort_by(|&i, &j| values_raw[i].total_cmp(&values_raw[j]));

    let values: Vec<f64> = order.iter().map(|&i| values_raw[i]).collect();
    let mut vectors = ComplexMatrix::zeros(n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for row in 0..n {
            vectors.set(row, new_col, v.get(row, old_col));
        }
    }
    Ok((values, vectors))
}

fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let n = a.dim();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a.get(i, j).norm_sqr();
            }
        }
    }
    sum.sqrt()
}

/// One Jacobi rotation annihilating the (p, q) entry.
///
/// The complex entry is reduced to a real one by a phase, then the standard
/// real rotation applies. `a` is conjugated in place and the rotation is
/// accumulated into `v`.
fn rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = a.get(p, q);
    let b = apq.norm();
    if b == 0.0 {
        return;
    }
    let phase = apq / b; // e^{i phi}
    let alpha = a.get(p, p).re;
    let gamma = a.get(q, q).re;

    let tau = (gamma - alpha) / (2.0 * b);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    // Embedded 2x2 unitary: [[c, s], [-s e^{-i phi}, c e^{-i phi}]].
    let jpp = Complex64::new(c, 0.0);
    let jpq = Complex64::new(s, 0.0);
    let jqp = -s * phase.conj();
    let jqq = c * phase.conj();

    let n = a.dim();
    // A <- A J (column update).
    for k in 0..n {
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        a.set(k, p, akp * jpp + akq * jqp);
        a.set(k, q, akp * jpq + akq * jqq);
    }
    // A <- J^dag A (row update).
    for k in 0..n {
        let apk = a.get(p, k);
        let aqk = a.get(q, k);
        a.set(p, k, jpp.conj() * apk + jqp.conj() * aqk);
        a.set(q, k, jpq.conj() * apk + jqq.conj() * aqk);
    }
    // Clean the pivot entries to their analytic values.
    a.set(p, q, Complex64::new(0.0, 0.0));
    a.set(q, p, Complex64::new(0.0, 0.0));
    a.set(p, p, Complex64::new(alpha - t * b, 0.0));
    a.set(q, q, Complex64::new(gamma + t * b, 0.0));

    // V <- V J.
    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, vkp * jpp + vkq * jqp);
        v.set(k, q, vkp * jpq + vkq * jqq);
    }
}
