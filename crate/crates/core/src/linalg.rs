//! Small dense helpers shared by the numerical modules.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{CMatrix, CVector, C64};

pub(crate) fn is_real(m: &CMatrix) -> bool {
    m.iter().all(|z| z.im == 0.0)
}

pub(crate) fn max_abs_dev_from_identity(m: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((m[(i, j)] - C64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Ascending eigenvalues of a Hermitian matrix.
pub(crate) fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Spectral norm of a Hermitian matrix.
pub(crate) fn hermitian_norm(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m).into_iter().fold(0.0f64, |acc, l| acc.max(l.abs()))
}

/// Unit-modulus direction of `z`; zero maps to `fallback`.
#[inline]
pub(crate) fn phase_or(z: C64, fallback: C64) -> C64 {
    let r = z.norm();
    if r > 0.0 {
        z / r
    } else {
        fallback
    }
}

pub(crate) fn l1_norm(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm()).sum()
}

pub(crate) fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

/// Largest eigenvalue of `AᴴA` by power iteration from a fixed start.
pub(crate) fn spectral_norm_power(a: &CMatrix, iters: usize) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    // irregular start so it is not orthogonal to structured singular vectors
    let mut v = CVector::from_fn(n, |j, _| C64::new(1.0 + 0.37 * (j as f64).sin(), 0.11 * (j as f64).cos()));
    v /= C64::new(v.norm(), 0.0);
    let mut sigma = 0.0;
    for _ in 0..iters {
        let w = a.adjoint() * (a * &v);
        let nrm = w.norm();
        if nrm == 0.0 {
            return 0.0;
        }
        sigma = nrm.sqrt();
        v = w / C64::new(nrm, 0.0);
    }
    sigma
}
