//! Explicit Runge–Kutta integration with dense output, and detection of
//! positive crossings through hyperplane sections.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::field::VectorField;
use crate::trajectory::{Coordinates, Crossing, Trajectory};

/// Crossings whose transversality derivative `|⟨ẋ, n⟩|` falls below this are
/// flagged as grazing.
pub const GRAZING_TOL: f64 = 1e-12;
/// Refinement target for `|⟨x(t*) − p, n⟩|`.
pub const CROSSING_TOL: f64 = 1e-10;
pub const MAX_BISECTIONS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Rk4Fixed { dt: f64 },
    Rkf45Adaptive { rtol: f64, atol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    #[serde(flatten)]
    pub method: Method,
    pub t_max: f64,
    pub max_steps: usize,
    /// Optional cap on the adaptive step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_dt: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::Rkf45Adaptive { rtol: 1e-9, atol: 1e-11 },
            t_max: 200.0,
            max_steps: 5_000_000,
            max_dt: None,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(dt: f64, t_max: f64) -> Self {
        IntegratorConfig { method: Method::Rk4Fixed { dt }, t_max, ..Default::default() }
    }

    pub fn adaptive(rtol: f64, atol: f64, t_max: f64) -> Self {
        IntegratorConfig { method: Method::Rkf45Adaptive { rtol, atol }, t_max, ..Default::default() }
    }

    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn with_max_dt(mut self, max_dt: f64) -> Self {
        self.max_dt = Some(max_dt);
        self
    }

    fn validate(&self) -> Result<(), Error> {
        let ok = match self.method {
            Method::Rk4Fixed { dt } => dt > 0.0,
            Method::Rkf45Adaptive { rtol, atol } => rtol > 0.0 && atol > 0.0,
        };
        if !ok || !(self.t_max > 0.0) || self.max_steps == 0 || self.max_dt.is_some_and(|h| !(h > 0.0)) {
            return Err(Error::InvalidParameter(format!("invalid integrator config {self:?}")));
        }
        Ok(())
    }
}

/// Integration failures. Each carries the trajectory computed up to the
/// failure.
#[derive(Debug, Error)]
pub enum IntegrationError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64, partial: Box<Trajectory> },
    #[error("exceeded {max_steps} steps at t = {t}")]
    MaxSteps { t: f64, max_steps: usize, partial: Box<Trajectory> },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64, partial: Box<Trajectory> },
    #[error("{0}")]
    Config(String),
}

impl IntegrationError {
    pub fn partial(&self) -> Option<&Trajectory> {
        match self {
            IntegrationError::StepUnderflow { partial, .. }
            | IntegrationError::MaxSteps { partial, .. }
            | IntegrationError::NonFinite { partial, .. } => Some(partial),
            IntegrationError::Config(_) => None,
        }
    }
}

/// Integrates `ẋ = F(x)` from `x0` on `[0, t_max]`.
pub fn integrate<F: VectorField + ?Sized>(
    field: &F,
    x0: &DVector<f64>,
    config: &IntegratorConfig,
) -> Result<Trajectory, IntegrationError> {
    integrate_in(field, x0, config, Coordinates::Linear)
}

/// Integrates a field expressed in the given coordinates. `y0` is the initial
/// state in those coordinates; the returned trajectory reports physical states.
pub fn integrate_in<F: VectorField + ?Sized>(
    field: &F,
    y0: &DVector<f64>,
    config: &IntegratorConfig,
    coords: Coordinates,
) -> Result<Trajectory, IntegrationError> {
    config.validate().map_err(|e| IntegrationError::Config(e.to_string()))?;
    if y0.len() != field.dim() {
        return Err(IntegrationError::Config(format!(
            "initial state has dimension {}, field has {}",
            y0.len(),
            field.dim()
        )));
    }
    let d0 = field.eval(y0);
    let mut traj = Trajectory::start(0.0, y0.clone(), d0, coords);
    if !finite(y0) || !finite(traj_last_slope(&traj)) {
        return Err(IntegrationError::NonFinite { t: 0.0, partial: Box::new(traj) });
    }
    match config.method {
        Method::Rk4Fixed { dt } => rk4_loop(field, &mut traj, dt, config)?,
        Method::Rkf45Adaptive { rtol, atol } => rkf45_loop(field, &mut traj, rtol, atol, config)?,
    }
    Ok(traj)
}

fn finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn traj_last_slope(traj: &Trajectory) -> &DVector<f64> {
    traj.slope(traj.len() - 1)
}

fn rk4_loop<F: VectorField + ?Sized>(
    field: &F,
    traj: &mut Trajectory,
    dt: f64,
    config: &IntegratorConfig,
) -> Result<(), IntegrationError> {
    let mut t = 0.0;
    let mut y = traj.node(0).clone();
    let mut k1 = traj_last_slope(traj).clone();
    let mut steps = 0;
    while t < config.t_max {
        if steps >= config.max_steps {
            return Err(IntegrationError::MaxSteps { t, max_steps: config.max_steps, partial: Box::new(traj.clone()) });
        }
        let h = dt.min(config.t_max - t);
        let k2 = field.eval(&(&y + &k1 * (0.5 * h)));
        let k3 = field.eval(&(&y + &k2 * (0.5 * h)));
        let k4 = field.eval(&(&y + &k3 * h));
        let y_new = &y + (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (h / 6.0);
        let t_new = if config.t_max - t - h <= 1e-12 * config.t_max { config.t_max } else { t + h };
        let d_new = field.eval(&y_new);
        if !finite(&y_new) || !finite(&d_new) {
            return Err(IntegrationError::NonFinite { t: t_new, partial: Box::new(traj.clone()) });
        }
        traj.push(t_new, y_new.clone(), d_new.clone());
        t = t_new;
        y = y_new;
        k1 = d_new;
        steps += 1;
    }
    Ok(())
}

// Fehlberg 4(5) tableau (autonomous fields, so no nodes); the fifth-order
// solution is propagated.
const A: [[f64; 5]; 6] = [
    [0.0; 5],
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
    [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
];
const B5: [f64; 6] = [16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0];
const B4: [f64; 6] = [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -0.2, 0.0];

fn rkf45_loop<F: VectorField + ?Sized>(
    field: &F,
    traj: &mut Trajectory,
    rtol: f64,
    atol: f64,
    config: &IntegratorConfig,
) -> Result<(), IntegrationError> {
    let max_dt = config.max_dt.unwrap_or(f64::INFINITY);
    let mut t = 0.0;
    let mut y = traj.node(0).clone();
    let mut k1 = traj_last_slope(traj).clone();
    let n = y.len();

    let scale0 = y.iter().map(|v| atol + rtol * v.abs()).collect::<Vec<_>>();
    let d0 = rms(y.iter().zip(&scale0).map(|(v, s)| v / s));
    let d1 = rms(k1.iter().zip(&scale0).map(|(v, s)| v / s));
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(max_dt).min(config.t_max);

    let mut attempts = 0usize;
    let mut k = [k1.clone(), k1.clone(), k1.clone(), k1.clone(), k1.clone(), k1.clone()];
    while t < config.t_max {
        if attempts >= config.max_steps {
            return Err(IntegrationError::MaxSteps { t, max_steps: config.max_steps, partial: Box::new(traj.clone()) });
        }
        attempts += 1;
        let last = t + h >= config.t_max;
        if last {
            h = config.t_max - t;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(IntegrationError::StepUnderflow { t, partial: Box::new(traj.clone()) });
        }
        k[0].copy_from(&k1);
        for s in 1..6 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate().take(s) {
                if A[s][j] != 0.0 {
                    ys.axpy(h * A[s][j], kj, 1.0);
                }
            }
            k[s] = field.eval(&ys);
        }
        let mut y_new = y.clone();
        let mut err = 0.0f64;
        for i in 0..n {
            let mut hi = 0.0;
            let mut lo = 0.0;
            for s in 0..6 {
                hi += B5[s] * k[s][i];
                lo += B4[s] * k[s][i];
            }
            y_new[i] += h * hi;
            let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((h * (hi - lo)).abs() / sc);
        }
        if !err.is_finite() || !finite(&y_new) {
            // Shrink and retry; a persistently non-finite field ends in underflow.
            h *= 0.25;
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(IntegrationError::NonFinite { t, partial: Box::new(traj.clone()) });
            }
            continue;
        }
        if err <= 1.0 {
            let t_new = if last { config.t_max } else { t + h };
            let d_new = field.eval(&y_new);
            if !finite(&d_new) {
                return Err(IntegrationError::NonFinite { t: t_new, partial: Box::new(traj.clone()) });
            }
            traj.push(t_new, y_new.clone(), d_new.clone());
            t = t_new;
            y = y_new;
            k1 = d_new;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = (h * factor).min(max_dt);
    }
    Ok(())
}

fn rms(it: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = it.fold((0.0, 0usize), |(s, c), v| (s + v * v, c + 1));
    (s / c.max(1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingDirection {
    /// `⟨x − p, n⟩` goes from negative to non-negative.
    #[default]
    PositiveCrossing,
}

/// Hyperplane `{x : ⟨x − p, n⟩ = 0}` with unit normal `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionSpec {
    pub id: usize,
    pub point: Vec<f64>,
    pub normal: Vec<f64>,
    #[serde(default)]
    pub direction: CrossingDirection,
}

impl SectionSpec {
    /// Normalizes `normal`; rejects a zero or mismatched normal.
    pub fn new(point: DVector<f64>, normal: DVector<f64>) -> Result<Self, Error> {
        let norm = normal.norm();
        if point.len() != normal.len() || !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidParameter("section normal must be a nonzero vector of matching dimension".into()));
        }
        Ok(SectionSpec {
            id: 0,
            point: point.iter().copied().collect(),
            normal: (normal / norm).iter().copied().collect(),
            direction: CrossingDirection::PositiveCrossing,
        })
    }

    pub fn with_id(mut self, id: usize) -> Self {
        self.id = id;
        self
    }

    /// Signed distance `⟨x − p, n⟩`.
    pub fn signed_distance(&self, x: &DVector<f64>) -> f64 {
        x.iter().zip(&self.point).zip(&self.normal).map(|((x, p), n)| (x - p) * n).sum()
    }

    fn normal_dot(&self, v: &DVector<f64>) -> f64 {
        v.iter().zip(&self.normal).map(|(v, n)| v * n).sum()
    }
}

/// Sub-intervals scanned per step for sign changes of the section function.
const SCAN_PER_STEP: usize = 4;

/// All negative-to-positive crossings of `section`, refined by bisection on
/// the dense interpolant.
pub fn detect_crossings(traj: &Trajectory, section: &SectionSpec) -> Vec<Crossing> {
    let mut out = Vec::new();
    if traj.len() < 2 {
        return out;
    }
    let sfun = |t: f64| section.signed_distance(&traj.state_at(t));
    for k in 0..traj.len() - 1 {
        let (t0, t1) = (traj.times()[k], traj.times()[k + 1]);
        let mut ta = t0;
        let mut sa = section.signed_distance(&traj.state(k));
        for j in 1..=SCAN_PER_STEP {
            let tb = if j == SCAN_PER_STEP { t1 } else { t0 + (t1 - t0) * j as f64 / SCAN_PER_STEP as f64 };
            let sb = if j == SCAN_PER_STEP { section.signed_distance(&traj.state(k + 1)) } else { sfun(tb) };
            if sa < 0.0 && sb >= 0.0 {
                let t_star = refine(&sfun, ta, tb, sa);
                let state = traj.state_at(t_star);
                let slope = section.normal_dot(&traj.velocity_at(t_star));
                out.push(Crossing {
                    t: t_star,
                    state: state.iter().copied().collect(),
                    section_id: section.id,
                    grazing: slope.abs() < GRAZING_TOL,
                });
            }
            ta = tb;
            sa = sb;
        }
    }
    out
}

fn refine(sfun: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut s_lo: f64) -> f64 {
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..MAX_BISECTIONS {
        mid = 0.5 * (lo + hi);
        let s = sfun(mid);
        if s.abs() < CROSSING_TOL {
            return mid;
        }
        if (s < 0.0) == (s_lo < 0.0) {
            lo = mid;
            s_lo = s;
        } else {
            hi = mid;
        }
    }
    mid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::LinearField;

    #[test]
    fn adaptive_decay_matches_closed_form() {
        let f = LinearField::decay(3);
        let x0 = DVector::from_element(3, 1.0);
        let cfg = IntegratorConfig::adaptive(1e-9, 1e-11, 1.0);
        let tr = integrate(&f, &x0, &cfg).unwrap();
        assert_eq!(tr.t_end(), 1.0);
        let e = (-1.0f64).exp();
        for v in tr.final_state().iter() {
            assert!((v - e).abs() < 1e-8);
        }
        assert!(tr.all_finite());
    }

    #[test]
    fn adaptive_error_within_tolerance_along_orbit() {
        let f = LinearField::decay(2);
        let x0 = DVector::from_vec(vec![1.0, -2.0]);
        let tr = integrate(&f, &x0, &IntegratorConfig::adaptive(1e-9, 1e-11, 10.0)).unwrap();
        for k in 0..tr.len() {
            let t = tr.times()[k];
            let exact = &x0 * (-t).exp();
            let err = (tr.state(k) - exact).amax();
            assert!(err < 1e-8, "t={t} err={err}");
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let f = LinearField::decay(1);
        let x0 = DVector::from_vec(vec![1.0]);
        let e = (-1.0f64).exp();
        let err = |dt| (integrate(&f, &x0, &IntegratorConfig::rk4(dt, 1.0)).unwrap().final_state()[0] - e).abs();
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn decay_norm_strictly_decreases() {
        let f = LinearField::decay(3);
        let x0 = DVector::from_vec(vec![1.0, 0.5, -0.2]);
        let tr = integrate(&f, &x0, &IntegratorConfig::adaptive(1e-9, 1e-11, 5.0)).unwrap();
        let norms: Vec<f64> = tr.states().map(|x| x.norm()).collect();
        assert!(norms.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn dense_output_hits_nodes() {
        let f = LinearField::rotation(1.3);
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let tr = integrate(&f, &x0, &IntegratorConfig::default().with_t_max(10.0)).unwrap();
        for k in 0..tr.len() {
            assert!((tr.state_at(tr.times()[k]) - tr.state(k)).amax() < 1e-12);
        }
    }

    #[test]
    fn rotation_crossings_are_equally_spaced() {
        let omega = 2.0;
        let f = LinearField::rotation(omega);
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let tr = integrate(&f, &x0, &IntegratorConfig::default().with_t_max(20.0)).unwrap();
        // Section through angle 0: x_2 = 0 crossed upward.
        let sec = SectionSpec::new(DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, 1.0])).unwrap();
        let cr = detect_crossings(&tr, &sec);
        assert!(cr.len() >= 5);
        let period = 2.0 * std::f64::consts::PI / omega;
        for w in cr.windows(2) {
            assert!((w[1].t - w[0].t - period).abs() < 1e-8);
        }
        for c in &cr {
            assert!(!c.grazing);
            assert!(c.state[1].abs() < 1e-10);
        }
        // Idempotent.
        assert_eq!(cr, detect_crossings(&tr, &sec));
    }

    #[test]
    fn blow_up_reports_partial_trajectory() {
        let f = crate::field::FnField::new(1, |x: &DVector<f64>| x.map(|v| v * v));
        let x0 = DVector::from_vec(vec![1.0]);
        let err = integrate(&f, &x0, &IntegratorConfig::default().with_t_max(2.0)).unwrap_err();
        let partial = err.partial().expect("partial trajectory");
        assert!(partial.t_end() < 1.0 && partial.len() > 1);
    }

    #[test]
    fn max_steps_is_enforced() {
        let f = LinearField::decay(1);
        let cfg = IntegratorConfig { max_steps: 3, ..IntegratorConfig::rk4(0.01, 1.0) };
        let err = integrate(&f, &DVector::from_vec(vec![1.0]), &cfg).unwrap_err();
        assert!(matches!(err, IntegrationError::MaxSteps { .. }));
    }

    #[test]
    fn rejects_bad_config() {
        let f = LinearField::decay(1);
        let cfg = IntegratorConfig::rk4(-1.0, 1.0);
        assert!(matches!(integrate(&f, &DVector::from_vec(vec![1.0]), &cfg), Err(IntegrationError::Config(_))));
        assert!(SectionSpec::new(DVector::zeros(2), DVector::zeros(2)).is_err());
    }
}
