//! Spectrum of the Jacobian at an axial equilibrium.
//!
//! At `a_i e_i` the Jacobian is `−I + ΣA − Σb uᵀ`, a diagonal matrix minus a
//! rank-one term, so its eigenvalues are the zeros of a secular function
//! shifted by one. The secular roots are found by bisection and serve as an
//! independent check on the dense eigensolver.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::NeuralFieldSystem;
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::linalg::real_eigenvalues;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxialSpectrum {
    /// Eigensolver output, ascending.
    pub eigenvalues: Vec<f64>,
    pub max_imag: f64,
    pub n_positive: usize,
    pub n_negative: usize,
    /// Eigenvalues recovered from the secular equation, ascending.
    pub secular: Vec<f64>,
    /// Diagonal of `ΣA`.
    pub poles: Vec<f64>,
}

impl AxialSpectrum {
    /// Largest gap between the two eigenvalue lists.
    pub fn secular_mismatch(&self) -> f64 {
        self.eigenvalues.iter().zip(&self.secular).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// `max_{j≠i} λ_j − 1`, the largest diagonal entry of `−I + ΣA` off the
    /// active coordinate.
    pub fn largest_shifted_pole(&self, i: usize) -> f64 {
        self.poles.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, l)| l - 1.0).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Subtracting a rank-one term with positive weights pushes every
    /// eigenvalue below its diagonal entry: with `d_1 ≤ … ≤ d_n` the sorted
    /// entries of `−I + ΣA`, the sorted eigenvalues satisfy
    /// `e_1 ≤ d_1 ≤ e_2 ≤ … ≤ e_n ≤ d_n`. Checked within `tol`.
    pub fn interlaces(&self, tol: f64) -> bool {
        let mut d: Vec<f64> = self.poles.iter().map(|l| l - 1.0).collect();
        d.sort_by(f64::total_cmp);
        let e = &self.eigenvalues;
        (0..d.len()).all(|k| e[k] <= d[k] + tol && (k == 0 || d[k - 1] <= e[k] + tol))
    }
}

/// Poles `λ_j` and weights `α_j` of the secular function at equilibrium `i`.
fn secular_data(sys: &NeuralFieldSystem, i: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let a = sys.require_axial()?;
    if i >= a.len() {
        return Err(Error::InvalidParameter(format!("equilibrium index {i} out of range")));
    }
    let sigma = sys.activation();
    let mut poles = Vec::with_capacity(a.len());
    let mut alphas = Vec::with_capacity(a.len());
    for (j, aj) in a.iter().enumerate() {
        let s = sigma.inverse(*aj)?;
        let slope = sigma.derivative(if j == i { s } else { 0.0 });
        poles.push(s * slope / aj);
        alphas.push(sys.bias()[j] * slope / aj);
    }
    Ok((poles, alphas))
}

fn phi(poles: &[f64], alphas: &[f64], mu: f64) -> f64 {
    1.0 + poles.iter().zip(alphas).map(|(l, a)| a / (mu - l)).sum::<f64>()
}

/// `φ(μ) = 1 + Σ α_j/(μ − λ_j)`.
pub fn secular_phi(sys: &NeuralFieldSystem, i: usize, mu: f64) -> Result<f64> {
    let (poles, alphas) = secular_data(sys, i)?;
    if poles.contains(&mu) {
        return Err(Error::Domain(format!("φ has a pole at {mu}")));
    }
    Ok(phi(&poles, &alphas, mu))
}

/// Zero of the decreasing function `φ` on `(lo, hi)` by bisection.
fn bisect(poles: &[f64], alphas: &[f64], mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi(poles, alphas, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Eigenvalues of `Df(a_i e_i)` from the secular equation, ascending.
///
/// With `k` distinct poles `λ̃_1 < … < λ̃_k`, `φ` decreases between them and
/// has one zero below `λ̃_1` and one in each gap. A pole of multiplicity `m`
/// also contributes `λ̃ − 1` with multiplicity `m − 1`.
pub fn secular_roots(sys: &NeuralFieldSystem, i: usize) -> Result<Vec<f64>> {
    let (poles, alphas) = secular_data(sys, i)?;
    let mut distinct: Vec<(f64, f64, usize)> = Vec::new();
    let mut order: Vec<usize> = (0..poles.len()).collect();
    order.sort_by(|x, y| poles[*x].total_cmp(&poles[*y]));
    for j in order {
        match distinct.last_mut() {
            Some(last) if last.0 == poles[j] => {
                last.1 += alphas[j];
                last.2 += 1;
            }
            _ => distinct.push((poles[j], alphas[j], 1)),
        }
    }
    let p: Vec<f64> = distinct.iter().map(|d| d.0).collect();
    let w: Vec<f64> = distinct.iter().map(|d| d.1).collect();
    let total: f64 = w.iter().sum();
    let mut mus = vec![bisect(&p, &w, p[0] - total - 1.0, p[0])];
    for pair in p.windows(2) {
        mus.push(bisect(&p, &w, pair[0], pair[1]));
    }
    for d in &distinct {
        mus.extend(std::iter::repeat_n(d.0, d.2 - 1));
    }
    let mut eig: Vec<f64> = mus.iter().map(|m| m - 1.0).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

pub fn axial_spectrum(sys: &NeuralFieldSystem, i: usize) -> Result<AxialSpectrum> {
    let (poles, _) = secular_data(sys, i)?;
    let jac = sys.jacobian(&sys.equilibrium(i)).expect("analytic Jacobian");
    let (eigenvalues, max_imag) = real_eigenvalues(&jac)?;
    let secular = secular_roots(sys, i)?;
    Ok(AxialSpectrum {
        n_positive: eigenvalues.iter().filter(|l| **l > 0.0).count(),
        n_negative: eigenvalues.iter().filter(|l| **l < 0.0).count(),
        eigenvalues,
        max_imag,
        secular,
        poles,
    })
}

/// Compares `det(Df − λI)` with `φ(λ+1)·det(ΣA − (λ+1)I)` at each `λ`.
/// Returns the number of sign disagreements and the largest relative gap.
pub fn determinant_check(sys: &NeuralFieldSystem, i: usize, lambdas: &[f64]) -> Result<(usize, f64)> {
    let (poles, alphas) = secular_data(sys, i)?;
    let n = sys.n();
    let jac = sys.jacobian(&sys.equilibrium(i)).expect("analytic Jacobian");
    let mut mismatches = 0;
    let mut worst: f64 = 0.0;
    for &l in lambdas {
        let direct = (&jac - DMatrix::identity(n, n) * l).determinant();
        let mu = l + 1.0;
        let diag: f64 = poles.iter().map(|p| p - mu).product();
        let lemma = phi(&poles, &alphas, mu) * diag;
        if direct.signum() != lemma.signum() {
            mismatches += 1;
        }
        worst = worst.max((direct - lemma).abs() / direct.abs().max(lemma.abs()).max(f64::MIN_POSITIVE));
    }
    Ok((mismatches, worst))
}

/// Axial diagonal `ΣA` at equilibrium `i` as a vector, for reports.
pub fn pole_vector(sys: &NeuralFieldSystem, i: usize) -> Result<DVector<f64>> {
    Ok(DVector::from_vec(secular_data(sys, i)?.0))
}
