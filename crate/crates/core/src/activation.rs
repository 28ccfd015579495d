//! Sigmoidal activation functions.
//!
//! Both kinds map ℝ onto (−1, 1), are normalized so that `σ(0) = 0` and
//! `σ'(0) = 1`, and satisfy `0 < σ'(s) ≤ 1`. They also satisfy the strict
//! concavity condition `σ'(s) < σ(s)/s < 1` for `s ≠ 0` that the spectral
//! counting results rely on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Tanh,
    /// `2/(1 + e^{−2s}) − 1`: the symmetric logistic with its argument
    /// pre-scaled by two so that the slope at the origin is one.
    ScaledLogistic,
}

impl std::str::FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(ActivationKind::Tanh),
            "scaled_logistic" | "logistic" => Ok(ActivationKind::ScaledLogistic),
            other => Err(Error::InvalidParameter(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Activation {
    kind: ActivationKind,
}

impl Default for Activation {
    fn default() -> Self {
        Activation::new(ActivationKind::Tanh)
    }
}

impl From<ActivationKind> for Activation {
    fn from(kind: ActivationKind) -> Self {
        Activation::new(kind)
    }
}

impl Activation {
    pub const fn new(kind: ActivationKind) -> Self {
        Activation { kind }
    }

    pub const fn tanh() -> Self {
        Activation::new(ActivationKind::Tanh)
    }

    pub const fn scaled_logistic() -> Self {
        Activation::new(ActivationKind::ScaledLogistic)
    }

    pub fn kind(&self) -> ActivationKind {
        self.kind
    }

    /// Lower and upper range bounds `(α, β)`; the image of σ is `(−α, β)`.
    pub fn range(&self) -> (f64, f64) {
        (1.0, 1.0)
    }

    #[inline]
    pub fn value(&self, s: f64) -> f64 {
        match self.kind {
            ActivationKind::Tanh => s.tanh(),
            ActivationKind::ScaledLogistic => {
                // Evaluate through the logistic in the numerically stable branch.
                if s >= 0.0 {
                    let e = (-2.0 * s).exp();
                    2.0 / (1.0 + e) - 1.0
                } else {
                    let e = (2.0 * s).exp();
                    2.0 * e / (1.0 + e) - 1.0
                }
            }
        }
    }

    #[inline]
    pub fn derivative(&self, s: f64) -> f64 {
        match self.kind {
            // sech², written to stay positive far into the tails.
            ActivationKind::Tanh => {
                let e = (-2.0 * s.abs()).exp();
                4.0 * e / ((1.0 + e) * (1.0 + e))
            }
            ActivationKind::ScaledLogistic => {
                // d/ds [2 ℓ(2s) − 1] = 4 ℓ(2s)(1 − ℓ(2s)), ℓ the logistic.
                let e = (-2.0 * s.abs()).exp();
                let l = 1.0 / (1.0 + e);
                4.0 * l * (e * l)
            }
        }
    }

    /// Second derivative; both kinds satisfy `σ'' = −2σσ'`.
    #[inline]
    pub fn second_derivative(&self, s: f64) -> f64 {
        let (v, d) = self.eval(s);
        -2.0 * v * d
    }

    /// Value and derivative in one call, sharing a single exponential. Both
    /// kinds reduce to the same expression in `e^{−2|s|}`.
    #[inline]
    pub fn eval(&self, s: f64) -> (f64, f64) {
        let a = 2.0 * s.abs();
        // e = e^{−a} and em = e − 1, each formed where it is exact.
        let (e, em) = if a > 0.7 {
            let e = (-a).exp();
            (e, e - 1.0)
        } else {
            let em = (-a).exp_m1();
            (1.0 + em, em)
        };
        let q = 1.0 + e;
        ((-em / q).copysign(s), 4.0 * e / (q * q))
    }

    /// Closed-form inverse on the open range `(−α, β)`.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if !(y > -lo && y < hi) {
            return Err(Error::Domain(format!(
                "σ⁻¹ undefined at {y}: outside ({}, {hi})",
                -lo
            )));
        }
        Ok(self.inverse_unchecked(y))
    }

    #[inline]
    pub(crate) fn inverse_unchecked(&self, y: f64) -> f64 {
        match self.kind {
            ActivationKind::Tanh => y.atanh(),
            // logit of the rescaled variable p = (1 + y)/2, halved to undo the
            // argument scaling.
            ActivationKind::ScaledLogistic => {
                let p = 0.5 * (1.0 + y);
                0.5 * (p / (1.0 - p)).ln()
            }
        }
    }

    /// Derivative of σ⁻¹ at `y`.
    pub fn inverse_derivative(&self, y: f64) -> Result<f64> {
        let s = self.inverse(y)?;
        Ok(1.0 / self.derivative(s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KINDS: [Activation; 2] = [Activation::tanh(), Activation::scaled_logistic()];

    #[test]
    fn normalized_at_origin() {
        for sigma in KINDS {
            assert_eq!(sigma.eval(0.0), (0.0, 1.0));
        }
    }

    #[test]
    fn tanh_at_one_matches_closed_form() {
        // tanh(1) and sech²(1), 20-digit references.
        let (v, d) = Activation::tanh().eval(1.0);
        assert!((v - 0.761_594_155_955_764_888_1).abs() < 1e-15);
        assert!((d - 0.419_974_341_614_026_1).abs() < 1e-15);
        let (v, d) = Activation::scaled_logistic().eval(1.0);
        assert!((v - 0.761_594_155_955_764_888_1).abs() < 1e-15);
        assert!((d - 0.419_974_341_614_026_1).abs() < 1e-15);
    }

    #[test]
    fn slope_bounds_on_wide_grid() {
        for sigma in KINDS {
            for k in -30000..=30000 {
                let s = k as f64 * 0.01;
                let (v, d) = sigma.eval(s);
                assert!(d > 0.0 && d <= 1.0, "{s}: {d}");
                // Beyond |s| ≈ 18.7 the value rounds to ±1 in f64.
                if s.abs() <= 18.0 {
                    assert!(v > -1.0 && v < 1.0);
                }
            }
        }
    }

    #[test]
    fn strict_concavity_condition() {
        for sigma in KINDS {
            for k in -1000..=1000 {
                if k == 0 {
                    continue;
                }
                let s = k as f64 * 0.01;
                let (v, d) = sigma.eval(s);
                let secant = v / s;
                assert!(d < secant && secant < 1.0, "{:?} at {s}", sigma.kind());
            }
        }
    }

    #[test]
    fn inverse_round_trip() {
        for sigma in KINDS {
            for k in -300..=300 {
                let s = k as f64 * 0.01;
                let back = sigma.inverse(sigma.value(s)).unwrap();
                assert!((back - s).abs() < 1e-12, "{s} -> {back}");
            }
            for k in -99..=99 {
                let y = k as f64 * 0.0099;
                let fwd = sigma.value(sigma.inverse(y).unwrap());
                assert!((fwd - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn second_derivative_matches_differences() {
        for sigma in KINDS {
            for k in -40..=40 {
                let s = k as f64 * 0.1;
                let h = 1e-5;
                let fd = (sigma.derivative(s + h) - sigma.derivative(s - h)) / (2.0 * h);
                assert!((sigma.second_derivative(s) - fd).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn inverse_rejects_out_of_range() {
        for sigma in KINDS {
            assert!(sigma.inverse(1.0).is_err());
            assert!(sigma.inverse(-1.0).is_err());
            assert!(sigma.inverse(f64::NAN).is_err());
        }
    }

    #[test]
    fn parses_kind_names() {
        assert_eq!("tanh".parse::<ActivationKind>().unwrap(), ActivationKind::Tanh);
        assert!("relu".parse::<ActivationKind>().is_err());
    }

    #[test]
    fn joint_evaluation_agrees_with_separate_calls() {
        for sigma in [Activation::tanh(), Activation::scaled_logistic()] {
            for k in -4000..=4000 {
                let s = k as f64 * 0.01 + 1e-3;
                let (v, d) = sigma.eval(s);
                assert!((v - sigma.value(s)).abs() <= 4e-16, "{s}");
                assert!((d - sigma.derivative(s)).abs() <= 4e-15 * d, "{s} {d} {}", sigma.derivative(s));
            }
        }
    }
}
