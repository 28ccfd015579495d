//! Normalized dynamics of systems with perturbed equilibria and their `C¹`
//! distance from the axial case.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::NeuralFieldSystem;
use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::linalg::operator_norm;
use crate::lv::lattice;

/// `F(v) = −v + X⁻¹ σ((σ⁻¹(X) − b 1ᵀ) v + b)`, the system seen in coordinates
/// `v = X⁻¹ x` where its equilibria are the unit vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedField {
    x_inv: DMatrix<f64>,
    inner: DMatrix<f64>,
    b: DVector<f64>,
    sigma: Activation,
}

impl NormalizedField {
    pub fn new(sys: &NeuralFieldSystem) -> Result<Self> {
        let x = sys.equilibrium_matrix();
        let n = sys.n();
        let x_inv = x.clone().try_inverse().ok_or(Error::Singular { condition: f64::INFINITY })?;
        let mut inner = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                inner[(i, j)] = sys.activation().inverse(x[(i, j)])? - sys.bias()[i];
            }
        }
        Ok(NormalizedField { x_inv, inner, b: sys.bias().clone(), sigma: sys.activation() })
    }

    fn preactivation(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.inner * v + &self.b
    }
}

impl VectorField for NormalizedField {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn eval(&self, v: &DVector<f64>) -> DVector<f64> {
        let z = self.preactivation(v);
        &self.x_inv * z.map(|s| self.sigma.value(s)) - v
    }

    /// `−I + X⁻¹ diag(σ'(z)) (σ⁻¹(X) − b 1ᵀ)`.
    fn jacobian(&self, v: &DVector<f64>) -> Option<DMatrix<f64>> {
        let z = self.preactivation(v);
        let mut scaled = self.inner.clone();
        for (r, s) in z.iter().enumerate() {
            scaled.row_mut(r).scale_mut(self.sigma.derivative(*s));
        }
        let n = self.dim();
        Some(&self.x_inv * scaled - DMatrix::identity(n, n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    /// `sup |F_ε − F|` over the grid (`∞`-norm in `v`); absent when skipped.
    pub value_sup: Option<f64>,
    /// `sup ‖DF_ε − DF‖₂` over the grid.
    pub jacobian_sup: Option<f64>,
    pub skipped: Option<String>,
}

impl ConvergenceRow {
    /// Sum of the two summands of the `C¹` distance.
    pub fn c1(&self) -> Option<f64> {
        Some(self.value_sup? + self.jacobian_sup?)
    }
}

/// Distance between the normalized fields of `diag(a) + ε E/‖E‖₂` and
/// `diag(a)` for each `ε`, sampled on a `per_axis`-node lattice of
/// `[lo, hi]`. Values of `ε` that push an entry out of σ's range or make the
/// equilibrium matrix singular are skipped with the reason recorded.
pub fn perturbation_convergence(
    a: &[f64],
    b: &[f64],
    sigma: Activation,
    direction: &DMatrix<f64>,
    eps_list: &[f64],
    lo: &[f64],
    hi: &[f64],
    per_axis: usize,
) -> Result<Vec<ConvergenceRow>> {
    let n = a.len();
    if direction.shape() != (n, n) || lo.len() != n || hi.len() != n {
        return Err(Error::InvalidParameter("perturbation direction and box must match the dimension".into()));
    }
    let norm = operator_norm(direction);
    if !(norm > 0.0) {
        return Err(Error::InvalidParameter("perturbation direction must be nonzero".into()));
    }
    let unit = direction / norm;
    let base_sys = NeuralFieldSystem::build_axial(a, b, sigma)?;
    let base = NormalizedField::new(&base_sys)?;
    let grid: Vec<DVector<f64>> = lattice(lo, hi, per_axis).collect();
    let base_vals: Vec<(DVector<f64>, DMatrix<f64>)> =
        grid.iter().map(|v| (base.eval(v), base.jacobian(v).expect("analytic Jacobian"))).collect();

    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let x = base_sys.equilibrium_matrix() + &unit * eps;
        let field = NeuralFieldSystem::build_perturbed(&x, b, sigma).and_then(|s| NormalizedField::new(&s));
        let field = match field {
            Ok(f) => f,
            Err(e) => {
                rows.push(ConvergenceRow { eps, value_sup: None, jacobian_sup: None, skipped: Some(e.to_string()) });
                continue;
            }
        };
        let (mut vs, mut js) = (0.0f64, 0.0f64);
        for (v, (f0, j0)) in grid.iter().zip(&base_vals) {
            vs = vs.max((field.eval(v) - f0).amax());
            js = js.max(operator_norm(&(field.jacobian(v).expect("analytic Jacobian") - j0)));
        }
        rows.push(ConvergenceRow { eps, value_sup: Some(vs), jacobian_sup: Some(js), skipped: None });
    }
    Ok(rows)
}

/// Writes the table as CSV with columns `eps,value_sup,jacobian_sup,skipped`.
pub fn write_convergence_csv<W: std::io::Write>(rows: &[ConvergenceRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["eps", "value_sup", "jacobian_sup", "skipped"])?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for r in rows {
        out.write_record([format!("{:e}", r.eps), fmt(r.value_sup), fmt(r.jacobian_sup), r.skipped.clone().unwrap_or_default()])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{finite_diff_jacobian, relative_matrix_error, FD_STEP};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn direction(seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn normalized_field_has_unit_equilibria() {
        let mut x = DMatrix::from_diagonal_element(3, 3, 0.6);
        x += direction(2) * 0.01;
        let sys = NeuralFieldSystem::build_perturbed(&x, &[0.2, 0.4, 0.6], Activation::tanh()).unwrap();
        let f = NormalizedField::new(&sys).unwrap();
        for k in 0..3 {
            let mut e = DVector::zeros(3);
            e[k] = 1.0;
            assert!(f.eval(&e).amax() < 1e-12);
        }
        let v = DVector::from_vec(vec![0.3, 0.2, -0.1]);
        let fd = finite_diff_jacobian(&f, &v, FD_STEP).unwrap();
        assert!(relative_matrix_error(&f.jacobian(&v).unwrap(), &fd) < 1e-6);
    }

    #[test]
    fn axial_normalized_field_matches_direct_formula() {
        let a = [0.3, 0.5, 0.8];
        let b = [0.2, 0.6, 0.4];
        let sys = NeuralFieldSystem::build_axial(&a, &b, Activation::tanh()).unwrap();
        let f = NormalizedField::new(&sys).unwrap();
        let ev = super::super::LyapunovEvaluator::new(&sys).unwrap();
        let v = DVector::from_vec(vec![0.4, -0.3, 0.9]);
        assert!((f.eval(&v) - ev.field(&v)).amax() < 1e-14);
    }

    #[test]
    fn convergence_is_first_order() {
        let rows = perturbation_convergence(
            &[0.5; 3],
            &[0.3; 3],
            Activation::tanh(),
            &direction(5),
            &[0.0, 1e-2, 1e-3, 1e-4],
            &[0.0; 3],
            &[1.0; 3],
            21,
        )
        .unwrap();
        assert_eq!(rows[0].c1(), Some(0.0));
        for pair in rows[1..].windows(2) {
            let ratio = pair[1].c1().unwrap() / pair[0].c1().unwrap();
            assert!((0.05..=0.2).contains(&ratio), "{ratio}");
        }
        let mut buf = Vec::new();
        write_convergence_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("eps,value_sup,jacobian_sup,skipped\n"));
    }

    #[test]
    fn oversized_perturbations_are_skipped() {
        let rows =
            perturbation_convergence(&[0.8; 3], &[0.3; 3], Activation::tanh(), &DMatrix::identity(3, 3), &[0.5, 1e-3], &[0.0; 3], &[1.0; 3], 5)
                .unwrap();
        assert!(rows[0].skipped.is_some());
        assert!(rows[1].skipped.is_none());
    }
}
