//! Discrete neural-field systems `ẋ = −x + σ(Wx + b)` with prescribed
//! equilibria, and the numerical checks showing they cannot carry a
//! heteroclinic cycle through those equilibria.

mod lyapunov;
mod perturb;
mod spectrum;
pub mod suite;

pub use lyapunov::{visit_check, LyapunovEvaluator, VisitReport};
pub use perturb::{perturbation_convergence, write_convergence_csv, ConvergenceRow, NormalizedField};
pub use spectrum::{axial_spectrum, determinant_check, pole_vector, secular_phi, secular_roots, AxialSpectrum};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::activation::{Activation, ActivationKind};
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::linalg::condition_number;

/// Largest accepted condition number of the equilibrium matrix.
pub const MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SystemRecord", try_from = "SystemRecord")]
pub struct NeuralFieldSystem {
    w: DMatrix<f64>,
    b: DVector<f64>,
    sigma: Activation,
    /// Columns are the prescribed equilibria.
    equilibria: DMatrix<f64>,
    /// Diagonal of the equilibrium matrix when it is diagonal.
    axial: Option<Vec<f64>>,
}

impl NeuralFieldSystem {
    /// Connectivity `W = A − b uᵀ` with `A = diag(σ⁻¹(a_i)/a_i)` and
    /// `u_i = 1/a_i`, so that every `a_i e_i` is an equilibrium.
    pub fn build_axial(a: &[f64], b: &[f64], sigma: Activation) -> Result<Self> {
        let n = a.len();
        if n < 3 || b.len() != n {
            return Err(Error::InvalidParameter(format!("need n ≥ 3 and matching lengths, got {n} and {}", b.len())));
        }
        if let Some(bad) = a.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::InvalidParameter(format!("equilibrium level {bad} outside (0, 1)")));
        }
        check_bias(b)?;
        let mut w = DMatrix::from_fn(n, n, |i, j| -b[i] / a[j]);
        for i in 0..n {
            w[(i, i)] += sigma.inverse(a[i])? / a[i];
        }
        Ok(NeuralFieldSystem {
            w,
            b: DVector::from_column_slice(b),
            sigma,
            equilibria: DMatrix::from_diagonal(&DVector::from_column_slice(a)),
            axial: Some(a.to_vec()),
        })
    }

    /// Connectivity `W_ε = (σ⁻¹(X) − b 1ᵀ) X⁻¹`, making every column of `X`
    /// an equilibrium.
    pub fn build_perturbed(x: &DMatrix<f64>, b: &[f64], sigma: Activation) -> Result<Self> {
        let n = x.nrows();
        if n == 0 || x.ncols() != n || b.len() != n {
            return Err(Error::InvalidParameter("equilibrium matrix must be square and match the bias".into()));
        }
        check_bias(b)?;
        let condition = condition_number(x);
        if !(condition <= MAX_CONDITION) {
            return Err(Error::Singular { condition });
        }
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = sigma.inverse(x[(i, j)])? - b[i];
            }
        }
        // W X = M, solved as Xᵀ Wᵀ = Mᵀ.
        let wt = x.transpose().lu().solve(&m.transpose()).ok_or(Error::Singular { condition })?;
        let is_diag = (0..n).all(|i| (0..n).all(|j| i == j || x[(i, j)] == 0.0));
        let axial = is_diag.then(|| x.diagonal().iter().copied().collect::<Vec<_>>());
        if let Some(a) = &axial {
            if a.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::InvalidParameter("diagonal equilibrium levels must be positive".into()));
            }
        }
        Ok(NeuralFieldSystem { w: wt.transpose(), b: DVector::from_column_slice(b), sigma, equilibria: x.clone(), axial })
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    pub fn connectivity(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn bias(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn activation(&self) -> Activation {
        self.sigma
    }

    pub fn equilibrium_matrix(&self) -> &DMatrix<f64> {
        &self.equilibria
    }

    pub fn equilibrium(&self, k: usize) -> DVector<f64> {
        self.equilibria.column(k).into_owned()
    }

    /// Levels `a_i` when the equilibria are axial.
    pub fn axial_levels(&self) -> Option<&[f64]> {
        self.axial.as_deref()
    }

    /// `max_k ‖f(x_k)‖_∞` over the prescribed equilibria.
    pub fn equilibrium_residual(&self) -> f64 {
        (0..self.n()).map(|k| self.eval(&self.equilibrium(k)).amax()).fold(0.0, f64::max)
    }

    pub(crate) fn require_axial(&self) -> Result<&[f64]> {
        self.axial_levels().ok_or_else(|| Error::InvalidParameter("operation needs axial equilibria".into()))
    }
}

fn check_bias(b: &[f64]) -> Result<()> {
    match b.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        Some(bad) => Err(Error::InvalidParameter(format!("bias entry {bad} must be positive"))),
        None => Ok(()),
    }
}

impl VectorField for NeuralFieldSystem {
    fn dim(&self) -> usize {
        self.n()
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let z = &self.w * x + &self.b;
        z.map(|s| self.sigma.value(s)) - x
    }

    /// `−I + diag(σ'(Wx + b)) W`.
    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let z = &self.w * x + &self.b;
        let mut j = self.w.clone();
        for (r, s) in z.iter().enumerate() {
            j.row_mut(r).scale_mut(self.sigma.derivative(*s));
            j[(r, r)] -= 1.0;
        }
        Some(j)
    }
}

#[derive(Serialize, Deserialize)]
struct SystemRecord {
    n: usize,
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
    sigma_kind: ActivationKind,
    #[serde(rename = "X")]
    x: Vec<Vec<f64>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl From<NeuralFieldSystem> for SystemRecord {
    fn from(s: NeuralFieldSystem) -> Self {
        SystemRecord { n: s.n(), w: rows(&s.w), b: s.b.as_slice().to_vec(), sigma_kind: s.sigma.kind(), x: rows(&s.equilibria) }
    }
}

impl TryFrom<SystemRecord> for NeuralFieldSystem {
    type Error = Error;

    fn try_from(r: SystemRecord) -> Result<Self> {
        let n = r.n;
        let square = |m: &Vec<Vec<f64>>| m.len() == n && m.iter().all(|row| row.len() == n);
        if !square(&r.w) || !square(&r.x) || r.b.len() != n {
            return Err(Error::InvalidParameter("serialized system has inconsistent shapes".into()));
        }
        check_bias(&r.b)?;
        let x = DMatrix::from_row_slice(n, n, &r.x.concat());
        let is_diag = (0..n).all(|i| (0..n).all(|j| i == j || x[(i, j)] == 0.0));
        Ok(NeuralFieldSystem {
            w: DMatrix::from_row_slice(n, n, &r.w.concat()),
            b: DVector::from_vec(r.b),
            sigma: Activation::new(r.sigma_kind),
            axial: is_diag.then(|| x.diagonal().iter().copied().collect()),
            equilibria: x,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{finite_diff_jacobian, relative_matrix_error, FD_STEP};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn half_level_example() {
        let sys = NeuralFieldSystem::build_axial(&[0.5; 3], &[0.3; 3], Activation::tanh()).unwrap();
        let diag = 2.0 * 0.5f64.atanh();
        assert!((diag - 1.0986122886681098).abs() < 1e-15);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { diag } else { 0.0 } - 0.3 * 2.0;
                assert!((sys.connectivity()[(i, j)] - expect).abs() < 1e-15);
            }
        }
        assert!(sys.equilibrium_residual() < 1e-15);
    }

    #[test]
    fn random_axial_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for sigma in [Activation::tanh(), Activation::scaled_logistic()] {
            for _ in 0..50 {
                let a: Vec<f64> = (0..4).map(|_| rng.random_range(0.2..0.9)).collect();
                let b: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..1.0)).collect();
                let sys = NeuralFieldSystem::build_axial(&a, &b, sigma).unwrap();
                assert!(sys.equilibrium_residual() < 1e-12);
            }
        }
    }

    #[test]
    fn axial_rejections() {
        let t = Activation::tanh();
        assert!(NeuralFieldSystem::build_axial(&[0.5, 1.0, 0.5], &[0.3; 3], t).is_err());
        assert!(NeuralFieldSystem::build_axial(&[0.5, 0.0, 0.5], &[0.3; 3], t).is_err());
        assert!(NeuralFieldSystem::build_axial(&[0.5; 3], &[0.3, -0.1, 0.3], t).is_err());
        assert!(NeuralFieldSystem::build_axial(&[0.5; 2], &[0.3; 2], t).is_err());
    }

    #[test]
    fn unperturbed_matrix_reproduces_axial_connectivity() {
        let a = [0.3, 0.6, 0.8];
        let b = [0.2, 0.5, 0.9];
        let axial = NeuralFieldSystem::build_axial(&a, &b, Activation::tanh()).unwrap();
        let x = DMatrix::from_diagonal(&DVector::from_column_slice(&a));
        let pert = NeuralFieldSystem::build_perturbed(&x, &b, Activation::tanh()).unwrap();
        assert!((pert.connectivity() - axial.connectivity()).amax() < 1e-14);
        assert_eq!(pert.axial_levels(), Some(&a[..]));
    }

    #[test]
    fn perturbed_equilibria_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dir = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let e = &dir * (1e-3 / crate::linalg::operator_norm(&dir));
        let x = DMatrix::from_diagonal_element(3, 3, 0.5) + e;
        let sys = NeuralFieldSystem::build_perturbed(&x, &[0.3; 3], Activation::tanh()).unwrap();
        assert!(sys.equilibrium_residual() < 1e-12);
        assert!(sys.axial_levels().is_none());
    }

    #[test]
    fn connectivity_shift_is_first_order() {
        let b = [0.3; 3];
        let base = NeuralFieldSystem::build_axial(&[0.5; 3], &b, Activation::tanh()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dir = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let dir = &dir / crate::linalg::operator_norm(&dir);
        let shift = |eps: f64| {
            let x = DMatrix::from_diagonal_element(3, 3, 0.5) + &dir * eps;
            let s = NeuralFieldSystem::build_perturbed(&x, &b, Activation::tanh()).unwrap();
            crate::linalg::operator_norm(&(s.connectivity() - base.connectivity()))
        };
        let ratio = shift(1e-3) / shift(1e-2);
        assert!((0.07..0.13).contains(&ratio), "{ratio}");
    }

    #[test]
    fn singular_equilibria_report_condition() {
        let x = DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.5]);
        match NeuralFieldSystem::build_perturbed(&x, &[0.3; 3], Activation::tanh()) {
            Err(Error::Singular { condition }) => assert!(condition > MAX_CONDITION),
            other => panic!("expected singular rejection, got {other:?}"),
        }
        let out_of_range = DMatrix::from_diagonal_element(3, 3, 1.2);
        assert!(NeuralFieldSystem::build_perturbed(&out_of_range, &[0.3; 3], Activation::tanh()).is_err());
    }

    #[test]
    fn jacobian_matches_differences() {
        let sys = NeuralFieldSystem::build_axial(&[0.3, 0.5, 0.7, 0.4], &[0.2, 0.4, 0.6, 0.8], Activation::tanh()).unwrap();
        let x = DVector::from_vec(vec![0.1, -0.2, 0.3, 0.05]);
        let fd = finite_diff_jacobian(&sys, &x, FD_STEP).unwrap();
        assert!(relative_matrix_error(&sys.jacobian(&x).unwrap(), &fd) < 1e-6);
    }

    #[test]
    fn json_round_trip() {
        let sys = NeuralFieldSystem::build_axial(&[0.3, 0.5, 0.7], &[0.2, 0.4, 0.6], Activation::scaled_logistic()).unwrap();
        let text = serde_json::to_string(&sys).unwrap();
        for key in ["\"n\"", "\"W\"", "\"b\"", "\"sigma_kind\"", "\"X\""] {
            assert!(text.contains(key), "{key}");
        }
        let back: NeuralFieldSystem = serde_json::from_str(&text).unwrap();
        assert_eq!(back, sys);
    }
}
