//! Competitive Lotka–Volterra targets with a designed heteroclinic cycle.
//!
//! The system is `g_i(x) = x_i (1 − Σ_j ρ_ij x_j)` on three species. The
//! interaction matrix is built so that the axial points `a_i e_i` are saddles
//! with one unstable eigenvalue `λ_u^i` pointing at the next saddle (indices
//! modulo 3) and a double stable eigenvalue `−1`:
//!
//! ```text
//! ρ_ii      = 1/a_i
//! ρ_(j+1)j  = (1 − λ_u^j)/a_j
//! ρ_(j+2)j  = 2/a_j
//! ```
//!
//! Saddle indices are zero-based throughout the API.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::integrate::{integrate_in, IntegrationError, IntegratorConfig};
use crate::trajectory::{Coordinates, Trajectory};

pub const SPECIES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotkaVolterraSystem {
    pub a: [f64; 3],
    pub lambda_u: [f64; 3],
    pub rho: [[f64; 3]; 3],
}

/// Interaction coefficients for the given intercepts and unstable eigenvalues.
pub fn interaction_matrix(a: [f64; 3], lambda_u: [f64; 3]) -> [[f64; 3]; 3] {
    let mut rho = [[0.0; 3]; 3];
    for j in 0..3 {
        rho[j][j] = 1.0 / a[j];
        rho[(j + 1) % 3][j] = (1.0 - lambda_u[j]) / a[j];
        rho[(j + 2) % 3][j] = 2.0 / a[j];
    }
    rho
}

impl LotkaVolterraSystem {
    /// Designs the target. Rejects `a_i ≤ 0` and `λ_u^i ∉ (0, 1)`: outside
    /// that range some `ρ_ij` turns non-positive and the cycle loses both
    /// competitivity and stability.
    pub fn build(a: [f64; 3], lambda_u: [f64; 3]) -> Result<Self> {
        if let Some(l) = lambda_u.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
            return Err(Error::InvalidParameter(format!("unstable eigenvalue {l} outside (0, 1)")));
        }
        Self::build_unchecked(a, lambda_u)
    }

    /// Like [`build`](Self::build) but accepts any `λ_u^i`; used to explore
    /// the non-competitive regime.
    pub fn build_unchecked(a: [f64; 3], lambda_u: [f64; 3]) -> Result<Self> {
        if let Some(v) = a.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!("axis intercept {v} must be positive")));
        }
        if lambda_u.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidParameter("unstable eigenvalues must be finite".into()));
        }
        Ok(LotkaVolterraSystem { a, lambda_u, rho: interaction_matrix(a, lambda_u) })
    }

    /// Symmetric design with `a = (1, 1, 1)`.
    pub fn symmetric(lambda: f64) -> Result<Self> {
        Self::build([1.0; 3], [lambda; 3])
    }

    pub fn equilibrium(&self, i: usize) -> DVector<f64> {
        let mut x = DVector::zeros(3);
        x[i] = self.a[i];
        x
    }

    pub fn equilibria(&self) -> Vec<DVector<f64>> {
        (0..3).map(|i| self.equilibrium(i)).collect()
    }

    pub fn rho_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(3, 3, |i, j| self.rho[i][j])
    }

    /// Eigenvalues of the Jacobian at saddle `i` and its unit unstable
    /// eigenvector, oriented toward the next saddle.
    ///
    /// At `a_i e_i` the Jacobian has row `i` equal to `−a_i ρ_i·` and is
    /// diagonal elsewhere with entries `1 − ρ_ki a_i`, so the spectrum is read
    /// off directly.
    pub fn jacobian_at_equilibrium(&self, i: usize) -> Result<SaddleSpectrum> {
        if i >= 3 {
            return Err(Error::InvalidParameter(format!("saddle index {i} out of range")));
        }
        let next = (i + 1) % 3;
        let other = (i + 2) % 3;
        let lu = 1.0 - self.rho[next][i] * self.a[i];
        let ls = [-self.rho[i][i] * self.a[i], 1.0 - self.rho[other][i] * self.a[i]];
        let mut v = DVector::zeros(3);
        v[next] = 1.0;
        v[i] = -self.a[i] * self.rho[i][next] / (1.0 + lu);
        let v = v.normalize();
        Ok(SaddleSpectrum { eigenvalues: [lu, ls[0], ls[1]], unstable_eigvec: v })
    }

    pub fn saddle_values(&self) -> Result<SaddleValues> {
        let mut nu = [0.0; 3];
        for (i, slot) in nu.iter_mut().enumerate() {
            let spec = self.jacobian_at_equilibrium(i)?;
            let lu = spec.eigenvalues[0];
            // Weakest contraction among the stable eigenvalues.
            let ls = spec.eigenvalues[1..].iter().map(|l| -l).fold(f64::INFINITY, f64::min);
            *slot = ls / lu;
        }
        let product = nu.iter().product::<f64>();
        Ok(SaddleValues { nu, product, stable: product > 1.0 })
    }

    /// The same dynamics in logarithmic coordinates `y = ln x`, valid on the
    /// open positive orthant.
    pub fn log_field(&self) -> LogLotkaVolterra<'_> {
        LogLotkaVolterra { sys: self }
    }

    /// Integrates from a strictly positive `x0` in logarithmic coordinates.
    ///
    /// Near the cycle the off-cycle coordinates shrink geometrically from one
    /// lap to the next and underflow in linear coordinates after a few laps;
    /// in log coordinates they stay representable.
    pub fn simulate(&self, x0: &DVector<f64>, config: &IntegratorConfig) -> Result<Trajectory> {
        if x0.len() != 3 || x0.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Domain("log-coordinate integration needs a strictly positive start".into()));
        }
        let y0 = x0.map(f64::ln);
        integrate_in(&self.log_field(), &y0, config, Coordinates::Log).map_err(|e: IntegrationError| e.into())
    }

    /// `x̄_i + δ e_i^u`, with coordinates left at zero by the eigenvector
    /// lifted to `δ` so the start lies off the invariant coordinate planes.
    pub fn perturbed_start(&self, i: usize, delta: f64) -> Result<DVector<f64>> {
        let spec = self.jacobian_at_equilibrium(i)?;
        let mut x = self.equilibrium(i) + spec.unstable_eigvec * delta;
        for v in x.iter_mut() {
            if *v <= 0.0 {
                *v = delta;
            }
        }
        Ok(x)
    }
}

const REFERENCE_STEP: f64 = 0.01;

impl LotkaVolterraSystem {
    /// The three connecting orbits as polylines from `x̄_i` to `x̄_{i+1}`,
    /// sampled at arclength steps of at most about 0.01.
    ///
    /// Each leg starts at `x̄_i + δ e_i^u`, which lies in the invariant plane
    /// spanned by `e_i` and `e_{i+1}`, and is integrated in linear coordinates
    /// until it comes within `δ` of the next saddle.
    pub fn heteroclinic_legs(&self, delta: f64) -> Result<Vec<Vec<DVector<f64>>>> {
        if !(delta > 0.0 && delta < 0.1) {
            return Err(Error::InvalidParameter("leg offset must lie in (0, 0.1)".into()));
        }
        let cfg = IntegratorConfig::adaptive(1e-10, 1e-13, 400.0).with_max_dt(0.05);
        let mut legs = Vec::with_capacity(3);
        for i in 0..3 {
            let next = self.equilibrium((i + 1) % 3);
            let spec = self.jacobian_at_equilibrium(i)?;
            let x0 = self.equilibrium(i) + spec.unstable_eigvec * delta;
            let traj = crate::integrate::integrate(self, &x0, &cfg)?;
            let hit = (0..traj.len())
                .find(|&k| (traj.state(k) - &next).norm() < delta)
                .ok_or_else(|| Error::NonFinite(format!("leg {} did not reach the next saddle", i + 1)))?;
            let mut leg = vec![self.equilibrium(i)];
            leg.extend(traj.arclength_samples(0.0, traj.times()[hit], REFERENCE_STEP).into_iter().map(|(_, x)| x));
            leg.push(next);
            legs.push(leg);
        }
        Ok(legs)
    }

    /// The legs joined into one closed polyline that starts and ends at `x̄_1`.
    pub fn heteroclinic_reference(&self, delta: f64) -> Result<Vec<DVector<f64>>> {
        let mut points = Vec::new();
        for leg in self.heteroclinic_legs(delta)? {
            let skip = usize::from(!points.is_empty());
            points.extend(leg.into_iter().skip(skip));
        }
        Ok(points)
    }
}

impl VectorField for LotkaVolterraSystem {
    fn dim(&self) -> usize {
        3
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(3, |i, _| {
            let s: f64 = (0..3).map(|j| self.rho[i][j] * x[j]).sum();
            x[i] * (1.0 - s)
        })
    }

    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_fn(3, 3, |k, l| {
            let diag = if k == l { 1.0 - (0..3).map(|j| self.rho[k][j] * x[j]).sum::<f64>() } else { 0.0 };
            diag - x[k] * self.rho[k][l]
        }))
    }
}

/// `ẏ_i = 1 − Σ_j ρ_ij e^{y_j}`.
#[derive(Debug, Clone, Copy)]
pub struct LogLotkaVolterra<'a> {
    sys: &'a LotkaVolterraSystem,
}

impl VectorField for LogLotkaVolterra<'_> {
    fn dim(&self) -> usize {
        3
    }

    fn eval(&self, y: &DVector<f64>) -> DVector<f64> {
        let x = [y[0].exp(), y[1].exp(), y[2].exp()];
        DVector::from_fn(3, |i, _| 1.0 - (0..3).map(|j| self.sys.rho[i][j] * x[j]).sum::<f64>())
    }

    fn jacobian(&self, y: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_fn(3, 3, |i, j| -self.sys.rho[i][j] * y[j].exp()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleSpectrum {
    /// `[λ_u, stable, stable]`.
    pub eigenvalues: [f64; 3],
    pub unstable_eigvec: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleValues {
    pub nu: [f64; 3],
    pub product: f64,
    pub stable: bool,
}

/// True iff every off-diagonal Jacobian entry is strictly negative at every
/// node of a `grid`-per-axis lattice on the box `[lo, hi]`.
pub fn is_competitive<F: VectorField>(field: &F, lo: &[f64], hi: &[f64], grid: usize) -> Result<bool> {
    let n = field.dim();
    if lo.len() != n || hi.len() != n || grid < 2 {
        return Err(Error::InvalidParameter("box must match the field dimension and grid ≥ 2".into()));
    }
    for x in lattice(lo, hi, grid) {
        let j = field.jacobian_or_fd(&x)?;
        for r in 0..n {
            for c in 0..n {
                if r != c && !(j[(r, c)] < 0.0) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Default competitivity box; the coordinate planes are excluded because the
/// off-diagonal partials vanish there identically.
pub const COMPETITIVE_BOX: ([f64; 3], [f64; 3]) = ([0.05; 3], [1.0; 3]);

/// Uniform lattice with `per_axis` nodes on each axis of `[lo, hi]`.
pub fn lattice<'a>(lo: &'a [f64], hi: &'a [f64], per_axis: usize) -> impl Iterator<Item = DVector<f64>> + 'a {
    let n = lo.len();
    let total = per_axis.pow(n as u32);
    (0..total).map(move |mut idx| {
        DVector::from_fn(n, |d, _| {
            let k = idx % per_axis;
            idx /= per_axis;
            if per_axis == 1 {
                lo[d]
            } else {
                lo[d] + (hi[d] - lo[d]) * k as f64 / (per_axis - 1) as f64
            }
        })
    })
}
