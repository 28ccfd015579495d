//! Uniform interface over the vector fields in this crate: Lotka–Volterra
//! targets, neural-field systems, their normalized forms and trained
//! approximators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default finite-difference step, scaled per coordinate by `max(1, |x_j|)`.
pub const FD_STEP: f64 = 1e-6;

pub trait VectorField {
    fn dim(&self) -> usize;

    fn eval(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Analytic Jacobian, when the field provides one.
    fn jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// Analytic Jacobian if available, central differences otherwise.
    fn jacobian_or_fd(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>
    where
        Self: Sized,
    {
        match self.jacobian(x) {
            Some(j) => Ok(j),
            None => finite_diff_jacobian(self, x, FD_STEP),
        }
    }
}

impl<F: VectorField + ?Sized> VectorField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        (**self).eval(x)
    }
    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        (**self).jacobian(x)
    }
}

/// Central-difference Jacobian, column `j` is `(F(x + h_j e_j) − F(x − h_j e_j)) / 2h_j`
/// with `h_j = h · max(1, |x_j|)`.
pub fn finite_diff_jacobian<F: VectorField + ?Sized>(
    field: &F,
    x: &DVector<f64>,
    h: f64,
) -> Result<DMatrix<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {h}")));
    }
    let n = field.dim();
    let mut jac = DMatrix::zeros(n, n);
    let mut xp = x.clone();
    for j in 0..n {
        let hj = h * x[j].abs().max(1.0);
        xp[j] = x[j] + hj;
        let fp = field.eval(&xp);
        xp[j] = x[j] - hj;
        let fm = field.eval(&xp);
        xp[j] = x[j];
        if fp.iter().chain(fm.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field evaluation near coordinate {j}")));
        }
        jac.set_column(j, &((fp - fm) / (2.0 * hj)));
    }
    Ok(jac)
}

/// Largest entrywise discrepancy between `a` and `b`, relative to the larger
/// of `max|a|` and one.
pub fn relative_matrix_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(1.0);
    (a - b).amax() / scale
}

/// A field built from closures; used for fixtures and tests.
pub struct FnField<F, J = fn(&DVector<f64>) -> DMatrix<f64>> {
    dim: usize,
    f: F,
    jac: Option<J>,
}

impl<F> FnField<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f, jac: None }
    }
}

impl<F, J> FnField<F, J>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    pub fn with_jacobian(dim: usize, f: F, jac: J) -> Self {
        FnField { dim, f, jac: Some(jac) }
    }
}

impl<F, J> VectorField for FnField<F, J>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.f)(x)
    }
    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.jac.as_ref().map(|j| j(x))
    }
}

/// `ẋ = Ax`.
#[derive(Debug, Clone)]
pub struct LinearField {
    pub matrix: DMatrix<f64>,
}

impl LinearField {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        assert!(matrix.is_square());
        LinearField { matrix }
    }

    /// Pure decay `ẋ = −x`.
    pub fn decay(n: usize) -> Self {
        LinearField::new(-DMatrix::identity(n, n))
    }

    /// Planar rotation with angular speed `omega` (counter-clockwise).
    pub fn rotation(omega: f64) -> Self {
        LinearField::new(DMatrix::from_row_slice(2, 2, &[0.0, -omega, omega, 0.0]))
    }
}

impl VectorField for LinearField {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }
    fn jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.matrix.clone())
    }
}

/// Planar Hopf normal form `ṙ = r(μ − r²)`, `θ̇ = ω` in Cartesian coordinates.
/// Its limit cycle has radius `√μ` and period `2π/ω`.
#[derive(Debug, Clone, Copy)]
pub struct HopfNormalForm {
    pub mu: f64,
    pub omega: f64,
}

impl VectorField for HopfNormalForm {
    fn dim(&self) -> usize {
        2
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let g = self.mu - r2;
        DVector::from_vec(vec![g * x[0] - self.omega * x[1], self.omega * x[0] + g * x[1]])
    }
    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (a, b) = (x[0], x[1]);
        let g = self.mu - a * a - b * b;
        Some(DMatrix::from_row_slice(
            2,
            2,
            &[g - 2.0 * a * a, -self.omega - 2.0 * a * b, self.omega - 2.0 * a * b, g - 2.0 * b * b],
        ))
    }
}
