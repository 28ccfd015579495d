//! The `N`-population system whose projection follows the learned field.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ApproxNetwork, BlockLayout};
use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::field::VectorField;

/// `ẏ = −y + σ(WP y + b)` on `R^N`. Any solution satisfies
/// `d(Py)/dt = f_θ(Py)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedSystem {
    pub connectivity: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub projection: DMatrix<f64>,
    pub sigma: Activation,
    pub block_layout: Option<BlockLayout>,
}

pub fn lift(net: &ApproxNetwork) -> LiftedSystem {
    let p = net.p_matrix();
    LiftedSystem {
        connectivity: net.w_matrix() * &p,
        bias: net.bias(),
        projection: p,
        sigma: net.activation(),
        block_layout: net.layout().cloned(),
    }
}

impl LiftedSystem {
    pub fn hidden(&self) -> usize {
        self.connectivity.nrows()
    }

    pub fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.projection * y
    }

    /// Minimum-norm `y` with `Py = x`.
    pub fn lift_point(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let pinv = self
            .projection
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::InvalidParameter(format!("read-out has no pseudo-inverse: {e}")))?;
        Ok(pinv * x)
    }
}

impl VectorField for LiftedSystem {
    fn dim(&self) -> usize {
        self.hidden()
    }

    fn eval(&self, y: &DVector<f64>) -> DVector<f64> {
        let z = &self.connectivity * y + &self.bias;
        z.map(|s| self.sigma.value(s)) - y
    }

    fn jacobian(&self, y: &DVector<f64>) -> Option<DMatrix<f64>> {
        let z = &self.connectivity * y + &self.bias;
        let mut j = self.connectivity.clone();
        for (r, s) in z.iter().enumerate() {
            let d = self.sigma.derivative(*s);
            j.row_mut(r).scale_mut(d);
            j[(r, r)] -= 1.0;
        }
        Some(j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::init_network;
    use crate::field::{finite_diff_jacobian, relative_matrix_error, FD_STEP};
    use crate::integrate::{integrate, IntegratorConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn net() -> ApproxNetwork {
        init_network(3, 45, Some(BlockLayout::uniform(3, 45).unwrap()), Activation::tanh(), 11).unwrap()
    }

    #[test]
    fn projection_identity_holds_to_round_off() {
        let net = net();
        let lifted = lift(&net);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let y = DVector::from_fn(45, |_, _| rng.random_range(-1.0..1.0));
            let lhs = lifted.project(&lifted.eval(&y));
            let rhs = net.eval(&lifted.project(&y));
            assert!((lhs - rhs).amax() < 1e-12);
        }
    }

    #[test]
    fn connectivity_has_block_shape() {
        let lifted = lift(&net());
        assert_eq!(lifted.connectivity.shape(), (45, 45));
        assert_eq!(lifted.block_layout.as_ref().unwrap().sizes(), &[15, 15, 15]);
    }

    #[test]
    fn jacobian_matches_differences() {
        let lifted = lift(&net());
        let y = DVector::from_fn(45, |i, _| ((i as f64) * 0.37).sin());
        let fd = finite_diff_jacobian(&lifted, &y, FD_STEP).unwrap();
        assert!(relative_matrix_error(&lifted.jacobian(&y).unwrap(), &fd) < 1e-6);
    }

    #[test]
    fn projected_trajectory_follows_the_network() {
        let net = net();
        let lifted = lift(&net);
        let x0 = DVector::from_vec(vec![0.3, 0.5, 0.2]);
        let y0 = lifted.lift_point(&x0).unwrap();
        assert!((lifted.project(&y0) - &x0).amax() < 1e-12);
        let cfg = IntegratorConfig::adaptive(1e-11, 1e-13, 20.0);
        let xt = integrate(&net, &x0, &cfg).unwrap();
        let yt = integrate(&lifted, &y0, &cfg).unwrap();
        for k in 0..=40 {
            let t = 0.5 * k as f64;
            assert!((lifted.project(&yt.state_at(t)) - xt.state_at(t)).amax() < 1e-6);
        }
    }
}
