//! Closeness of a trained network to its target and the per-run hypotheses
//! of the periodic-orbit results.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::ApproxNetwork;
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::linalg::operator_norm;
use crate::lv::{lattice, LotkaVolterraSystem};

/// Grid estimate of the two summands of the `C¹` distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C1Error {
    /// `max ‖g − f_θ‖_∞` over the grid.
    pub value_sup: f64,
    /// `max ‖Dg − Df_θ‖₂` over the grid.
    pub jacobian_sup: f64,
}

/// Evaluates both sups on a `per_axis`-node lattice of `[lo, hi]`.
pub fn c1_error<F: VectorField>(net: &ApproxNetwork, g: &F, lo: &[f64], hi: &[f64], per_axis: usize) -> Result<C1Error> {
    if g.dim() != net.n() || lo.len() != net.n() || hi.len() != net.n() || per_axis == 0 {
        return Err(Error::InvalidParameter("grid and field dimensions must match the network".into()));
    }
    let mut out = C1Error { value_sup: 0.0, jacobian_sup: 0.0 };
    for x in lattice(lo, hi, per_axis) {
        let dv = g.eval(&x) - net.eval(&x);
        out.value_sup = out.value_sup.max(dv.amax());
        let jg = g.jacobian_or_fd(&x)?;
        let jn = net.jacobian(&x).expect("network Jacobian is analytic");
        out.jacobian_sup = out.jacobian_sup.max(operator_norm(&(jg - jn)));
    }
    Ok(out)
}

/// Threshold below which `f_θ(x̄_i)` counts as vanishing.
pub const NONVANISHING_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideConditions {
    /// `‖f_θ(x̄_i)‖ > 1e−8` per saddle.
    pub nonvanishing: [bool; 3],
    /// `⟨f_θ(x̄_i), e_i^u⟩ > 0` per saddle.
    pub positivity: [bool; 3],
    /// Every off-diagonal of `Df_θ` negative at the tube samples.
    pub competitive_on_tube: bool,
    pub field_norms: [f64; 3],
    pub unstable_projections: [f64; 3],
    /// Largest off-diagonal Jacobian entry seen on the tube samples.
    pub max_off_diagonal: f64,
}

impl SideConditions {
    /// Nonvanishing and positivity at all three saddles.
    pub fn periodic_orbit_hypotheses(&self) -> bool {
        self.nonvanishing.iter().chain(&self.positivity).all(|b| *b)
    }
}

/// Checks a field (normally a trained network) at the target saddles and
/// samples competitivity on points around the target cycle.
///
/// The tube samples are the points of the reference polyline pushed a
/// distance `0.5·tube_radius` toward the diagonal, which keeps them off the
/// coordinate planes where the target's off-diagonal partials vanish.
pub fn check_side_conditions<F: VectorField>(
    net: &F,
    target: &LotkaVolterraSystem,
    tube_radius: f64,
) -> Result<SideConditions> {
    if net.dim() != 3 {
        return Err(Error::InvalidParameter("side conditions need a three-dimensional network".into()));
    }
    let mut out = SideConditions {
        nonvanishing: [false; 3],
        positivity: [false; 3],
        competitive_on_tube: true,
        field_norms: [0.0; 3],
        unstable_projections: [0.0; 3],
        max_off_diagonal: f64::NEG_INFINITY,
    };
    for i in 0..3 {
        let f = net.eval(&target.equilibrium(i));
        let eu = target.jacobian_at_equilibrium(i)?.unstable_eigvec;
        out.field_norms[i] = f.norm();
        out.unstable_projections[i] = f.dot(&eu);
        out.nonvanishing[i] = out.field_norms[i] > NONVANISHING_TOL;
        out.positivity[i] = out.unstable_projections[i] > 0.0;
    }
    let inward = DVector::from_element(3, 1.0).normalize() * (0.5 * tube_radius);
    for p in target.heteroclinic_reference(1e-3)?.iter().step_by(4) {
        let jac = net.jacobian_or_fd(&(p + &inward))?;
        for r in 0..3 {
            for c in 0..3 {
                if r != c {
                    out.max_off_diagonal = out.max_off_diagonal.max(jac[(r, c)]);
                }
            }
        }
    }
    out.competitive_on_tube = out.max_off_diagonal < 0.0;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::approx::{init_network, BlockLayout};

    #[test]
    fn identical_fields_have_zero_distance() {
        let net = init_network(3, 12, Some(BlockLayout::uniform(3, 12).unwrap()), Activation::tanh(), 2).unwrap();
        let e = c1_error(&net, &net, &[0.0; 3], &[1.0; 3], 5).unwrap();
        assert_eq!(e.value_sup, 0.0);
        assert_eq!(e.jacobian_sup, 0.0);
    }

    #[test]
    fn target_fails_nonvanishing_at_its_own_saddles() {
        let target = LotkaVolterraSystem::symmetric(0.6).unwrap();
        let sc = check_side_conditions(&target, &target, 0.15).unwrap();
        assert_eq!(sc.nonvanishing, [false; 3]);
        assert_eq!(sc.positivity, [false; 3]);
        assert!(!sc.periodic_orbit_hypotheses());
        assert!(sc.competitive_on_tube);
    }

    #[test]
    fn shifted_target_satisfies_positivity() {
        let target = LotkaVolterraSystem::symmetric(0.6).unwrap();
        let eu: Vec<DVector<f64>> = (0..3).map(|i| target.jacobian_at_equilibrium(i).unwrap().unstable_eigvec).collect();
        let pts: Vec<DVector<f64>> = (0..3).map(|i| target.equilibrium(i)).collect();
        // g plus a bump of 1e−3 e_i^u centered on each saddle
        let shifted = crate::field::FnField::new(3, move |x: &DVector<f64>| {
            let mut v = target.eval(x);
            for (p, e) in pts.iter().zip(&eu) {
                v += e * (1e-3 * (-(x - p).norm_squared() / 0.01).exp());
            }
            v
        });
        let target = LotkaVolterraSystem::symmetric(0.6).unwrap();
        let sc = check_side_conditions(&shifted, &target, 0.15).unwrap();
        assert!(sc.periodic_orbit_hypotheses(), "{sc:?}");
    }

    #[test]
    fn untrained_error_is_finite() {
        let target = LotkaVolterraSystem::symmetric(0.6).unwrap();
        let net = init_network(3, 45, Some(BlockLayout::uniform(3, 45).unwrap()), Activation::tanh(), 1).unwrap();
        let e = c1_error(&net, &target, &[0.0; 3], &[1.0; 3], 6).unwrap();
        assert!(e.value_sup.is_finite() && e.jacobian_sup.is_finite());
    }
}
