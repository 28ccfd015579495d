//! Section returns and period detection.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::integrate::{detect_crossings, SectionSpec};
use crate::lv::LotkaVolterraSystem;
use crate::trajectory::Trajectory;

/// Relative change between consecutive intervals accepted as converged.
pub const PERIOD_TOL: f64 = 0.01;
/// Crossings discarded as transient before the convergence rule is applied.
pub const TRANSIENT_CROSSINGS: usize = 2;
/// Crossings needed before a verdict is attempted.
pub const MIN_CROSSINGS: usize = 6;
/// Crossing-point steps below this count as converged in the contraction
/// check.
pub const CONTRACTION_FLOOR: f64 = 1e-8;
/// `|⟨x0 − p, n⟩|` below which a start counts as lying on the section.
const ON_SECTION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signature {
    /// Intervals settle (convergence rule fired).
    Periodic,
    /// Every interval is longer than the previous one.
    Heteroclinic,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnRecord {
    pub crossing_times: Vec<f64>,
    pub crossing_points: Vec<Vec<f64>>,
    /// `T_k = t_{k+1} − t_k`.
    pub intervals: Vec<f64>,
    pub converged_period: Option<f64>,
    /// Index `k` of the first interval of the converged run.
    pub convergence_k: Option<usize>,
    /// Whether crossing-point steps shrink over the converged run.
    pub contracting: Option<bool>,
    pub signature: Signature,
}

impl ReturnRecord {
    /// Applies the convergence rule to crossing times and points.
    pub fn from_crossings(times: Vec<f64>, points: Vec<Vec<f64>>) -> Self {
        let intervals: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        let rel = |k: usize| (intervals[k + 1] - intervals[k]).abs() / intervals[k];
        let mut convergence_k = None;
        if times.len() >= MIN_CROSSINGS {
            convergence_k = (TRANSIENT_CROSSINGS..intervals.len().saturating_sub(2))
                .find(|&k| rel(k) < PERIOD_TOL && rel(k + 1) < PERIOD_TOL);
        }
        let converged_period = convergence_k.map(|k| intervals[k + 2]);
        let contracting = convergence_k.map(|k| {
            let step = |j: usize| -> f64 {
                points[j + 1].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
            };
            (k..k + 2).all(|j| step(j + 1) < step(j) || step(j + 1) < CONTRACTION_FLOOR)
        });
        let increasing = intervals.len() >= 3 && intervals.windows(2).all(|w| w[1] > w[0]);
        let signature = if convergence_k.is_some() {
            Signature::Periodic
        } else if increasing {
            Signature::Heteroclinic
        } else {
            Signature::Undetermined
        };
        ReturnRecord { crossing_times: times, crossing_points: points, intervals, converged_period, convergence_k, contracting, signature }
    }

    /// Time of the crossing where the converged run starts.
    pub fn settled_time(&self) -> Option<f64> {
        self.convergence_k.map(|k| self.crossing_times[k])
    }
}

/// Positive crossings of `section` classified by the period convergence rule.
pub fn detect_periodic_orbit(traj: &Trajectory, section: &SectionSpec) -> ReturnRecord {
    let crossings = detect_crossings(traj, section);
    let times = crossings.iter().map(|c| c.t).collect();
    let points = crossings.into_iter().map(|c| c.state).collect();
    ReturnRecord::from_crossings(times, points)
}

/// Time from the first crossing of `section` to the next one, or from the
/// start when the trajectory begins on the section.
pub fn first_return_time(traj: &Trajectory, section: &SectionSpec) -> Result<f64> {
    let t0 = traj.t_start();
    let on_section = section.signed_distance(&traj.state(0)).abs() < ON_SECTION_TOL;
    let times: Vec<f64> = detect_crossings(traj, section)
        .into_iter()
        .map(|c| c.t)
        .filter(|&t| !on_section || t > t0 + ON_SECTION_TOL * (1.0 + t0.abs()))
        .collect();
    match (on_section, times.as_slice()) {
        (true, [t, ..]) => Ok(t - t0),
        (false, [a, b, ..]) => Ok(b - a),
        _ => Err(Error::NoReturn(format!(
            "{} positive crossing(s) in [{}, {}] from a start {} the section",
            times.len(),
            t0,
            traj.t_end(),
            if on_section { "on" } else { "off" }
        ))),
    }
}

/// Section on the first connecting orbit: the reference point farthest from
/// all three saddles, with the target field there as normal.
pub fn place_section(target: &LotkaVolterraSystem) -> Result<SectionSpec> {
    let legs = target.heteroclinic_legs(1e-3)?;
    let saddles = target.equilibria();
    let clearance = |x: &DVector<f64>| saddles.iter().map(|s| (x - s).norm()).fold(f64::INFINITY, f64::min);
    let p = legs[0]
        .iter()
        .max_by(|a, b| clearance(a).total_cmp(&clearance(b)))
        .cloned()
        .expect("legs are nonempty");
    SectionSpec::new(p.clone(), target.eval(&p))
}
