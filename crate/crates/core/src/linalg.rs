//! Dense eigenvalue and norm helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

/// All eigenvalues of a general real square matrix (real Schur form).
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let n = m.nrows();
    let schur = m
        .clone()
        .try_schur(f64::EPSILON, 10_000 * n.max(1))
        .ok_or_else(|| Error::Eigen(format!("Schur iteration failed on a {n}×{n} matrix")))?;
    let ev = schur.complex_eigenvalues();
    Ok(ev.iter().copied().collect())
}

/// Eigenvalues sorted by real part, with the largest imaginary part magnitude.
pub fn real_eigenvalues(m: &DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    let ev = eigenvalues(m)?;
    let max_imag = ev.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let mut re: Vec<f64> = ev.iter().map(|z| z.re).collect();
    re.sort_by(f64::total_cmp);
    Ok((re, max_imag))
}

/// Spectral (operator 2-) norm.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Condition number in the spectral norm; infinite for singular matrices.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / min
    }
}
