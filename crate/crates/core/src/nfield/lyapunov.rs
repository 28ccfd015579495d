//! The Lyapunov function of the axial system in normalized coordinates
//! `v = x/a`, where the equilibria become the unit vectors `e_i`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::NeuralFieldSystem;
use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::quad::{adaptive_simpson, CompositeGauss};

/// Absolute tolerance of the `∫ q_i` quadrature.
pub const QUAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LyapunovEvaluator {
    a: Vec<f64>,
    b: Vec<f64>,
    /// `σ⁻¹(a_i)`.
    s: Vec<f64>,
    sigma: Activation,
    slope_rule: CompositeGauss,
}

impl LyapunovEvaluator {
    pub fn new(sys: &NeuralFieldSystem) -> Result<Self> {
        let a = sys.require_axial()?.to_vec();
        let s = a.iter().map(|ai| sys.activation().inverse(*ai)).collect::<Result<Vec<_>>>()?;
        Ok(LyapunovEvaluator {
            a,
            b: sys.bias().as_slice().to_vec(),
            s,
            sigma: sys.activation(),
            slope_rule: CompositeGauss::new(10, 0.5),
        })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    /// True iff every `a_i v_i` lies in `(−1, 1)`.
    pub fn in_domain(&self, v: &DVector<f64>) -> bool {
        v.len() == self.n() && v.iter().zip(&self.a).all(|(vi, ai)| (ai * vi).abs() < 1.0)
    }

    fn check(&self, v: &DVector<f64>) -> Result<()> {
        if self.in_domain(v) {
            Ok(())
        } else {
            Err(Error::Domain(format!("{:?} outside the normalized cube", v.as_slice())))
        }
    }

    /// `u(v) = 1 − Σ v_k`.
    pub fn u(&self, v: &DVector<f64>) -> f64 {
        1.0 - v.sum()
    }

    /// `q_i(r) = (σ⁻¹(a_i r) − s_i r)/b_i`.
    pub fn q(&self, i: usize, r: f64) -> f64 {
        (self.sigma.inverse_unchecked(self.a[i] * r) - self.s[i] * r) / self.b[i]
    }

    /// Normalized field `F_i(v) = −v_i + σ(s_i v_i + b_i u)/a_i`.
    pub fn field(&self, v: &DVector<f64>) -> DVector<f64> {
        let u = self.u(v);
        DVector::from_fn(self.n(), |i, _| -v[i] + self.sigma.value(self.s[i] * v[i] + self.b[i] * u) / self.a[i])
    }

    /// `V(v) = ½u² + Σ ∫₀^{v_i} q_i`.
    pub fn value(&self, v: &DVector<f64>) -> Result<f64> {
        self.check(v)?;
        let u = self.u(v);
        let integrals: f64 = (0..self.n()).map(|i| adaptive_simpson(|r| self.q(i, r), 0.0, v[i], QUAD_TOL)).sum();
        Ok(0.5 * u * u + integrals)
    }

    /// `∇V·F` with `∂_i V = q_i(v_i) − u`.
    pub fn derivative(&self, v: &DVector<f64>) -> Result<f64> {
        self.check(v)?;
        let u = self.u(v);
        let f = self.field(v);
        Ok((0..self.n()).map(|i| (self.q(i, v[i]) - u) * f[i]).sum())
    }

    /// Positive weights `m_i(v)` with `F_i = m_i (u − q_i)`: `b_i/a_i` times
    /// the mean of `σ'` between `σ⁻¹(a_i v_i)` and `s_i v_i + b_i u`.
    pub fn weights(&self, v: &DVector<f64>) -> Result<Vec<f64>> {
        self.check(v)?;
        let u = self.u(v);
        Ok((0..self.n())
            .map(|i| {
                let z1 = self.s[i] * v[i] + self.b[i] * u;
                let z2 = self.sigma.inverse_unchecked(self.a[i] * v[i]);
                let mean = if z1 == z2 {
                    self.sigma.derivative(z1)
                } else {
                    self.slope_rule.integrate(|z| self.sigma.derivative(z), z2, z1) / (z1 - z2)
                };
                self.b[i] / self.a[i] * mean
            })
            .collect())
    }

    /// `−Σ m_i(v)(u − q_i(v_i))²`, computed without the field.
    pub fn derivative_factored(&self, v: &DVector<f64>) -> Result<f64> {
        let m = self.weights(v)?;
        let u = self.u(v);
        Ok(-(0..self.n()).map(|i| m[i] * (u - self.q(i, v[i])).powi(2)).sum::<f64>())
    }
}

/// One stay of a trajectory inside the ball around an equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub equilibrium: usize,
    pub enter_index: usize,
    pub exit_index: usize,
    pub v_enter: f64,
    pub v_exit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitReport {
    pub visits: Vec<Visit>,
    /// Transitions between distinct balls where `V` failed to drop.
    pub violations: usize,
}

/// Checks sampled trajectory data against the no-cycle consequence of the
/// Lyapunov function: after leaving the ball of `e_i`, the next ball is
/// entered at a strictly lower `V`, and a previously visited ball is never
/// re-entered at a higher `V` than it was last left with.
pub fn visit_check(states: &[DVector<f64>], values: &[f64], centers: &[DVector<f64>], radius: f64) -> VisitReport {
    let mut visits: Vec<Visit> = Vec::new();
    let mut current: Option<Visit> = None;
    for (k, (x, vk)) in states.iter().zip(values).enumerate() {
        let inside = centers.iter().position(|c| (x - c).norm() < radius);
        match (&mut current, inside) {
            (Some(cur), Some(i)) if cur.equilibrium == i => {
                cur.exit_index = k;
                cur.v_exit = *vk;
            }
            (_, inside) => {
                if let Some(done) = current.take() {
                    visits.push(done);
                }
                current = inside.map(|i| Visit { equilibrium: i, enter_index: k, exit_index: k, v_enter: *vk, v_exit: *vk });
            }
        }
    }
    visits.extend(current);

    let mut violations = 0;
    for (idx, visit) in visits.iter().enumerate() {
        if let Some(prev) = idx.checked_sub(1).map(|p| &visits[p]) {
            if prev.equilibrium != visit.equilibrium && !(visit.v_enter < prev.v_exit) {
                violations += 1;
            }
        }
        if let Some(earlier) = visits[..idx].iter().rev().find(|e| e.equilibrium == visit.equilibrium) {
            if visit.v_enter > earlier.v_exit {
                violations += 1;
            }
        }
    }
    VisitReport { visits, violations }
}
