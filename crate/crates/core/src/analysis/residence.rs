//! Time spent near each saddle.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

pub const DEFAULT_BALL_RADIUS: f64 = 0.1;
/// Ball radius used when analyzing trained networks. Their periodic orbits
/// cut the corners of the cycle and pass the saddles at a distance of about
/// 0.2, so the default balls are never entered.
pub const LEARNED_BALL_RADIUS: f64 = 0.3;

const SCAN_PER_STEP: usize = 4;
const BISECTIONS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub saddle: usize,
    pub t_enter: f64,
    pub t_exit: f64,
    /// False when the visit is cut by the start or the end of the trajectory.
    pub complete: bool,
}

impl Visit {
    pub fn duration(&self) -> f64 {
        self.t_exit - self.t_enter
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidenceProfile {
    pub radius: f64,
    pub saddles: usize,
    /// All visits in time order.
    pub visits: Vec<Visit>,
}

impl ResidenceProfile {
    /// Mean duration of the complete visits to each saddle that begin at or
    /// after `t_from`.
    pub fn means_from(&self, t_from: f64) -> Vec<Option<f64>> {
        (0..self.saddles)
            .map(|i| {
                let d: Vec<f64> = self
                    .visits
                    .iter()
                    .filter(|v| v.saddle == i && v.complete && v.t_enter >= t_from)
                    .map(Visit::duration)
                    .collect();
                (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64)
            })
            .collect()
    }

    pub fn means(&self) -> Vec<Option<f64>> {
        self.means_from(f64::NEG_INFINITY)
    }

    /// Durations of the complete visits to saddle `i`, one per lap.
    pub fn durations(&self, i: usize) -> Vec<f64> {
        self.visits.iter().filter(|v| v.saddle == i && v.complete).map(Visit::duration).collect()
    }

    /// True when every visit is followed by a visit to the next saddle in
    /// cyclic order.
    pub fn cyclic_order(&self) -> bool {
        self.visits.windows(2).all(|w| w[1].saddle == (w[0].saddle + 1) % self.saddles)
    }
}

/// Maximal time intervals with `‖x(t) − x̄_i‖ < r`, found on the dense
/// interpolant and refined by bisection.
pub fn residence_times(traj: &Trajectory, saddles: &[DVector<f64>], r: f64) -> Result<ResidenceProfile> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter("ball radius must be positive".into()));
    }
    let mut min_gap = f64::INFINITY;
    for (i, a) in saddles.iter().enumerate() {
        for b in &saddles[i + 1..] {
            min_gap = min_gap.min((a - b).norm());
        }
    }
    if r >= 0.5 * min_gap {
        return Err(Error::InvalidParameter(format!("ball radius {r} overlaps: saddles are {min_gap:.4} apart")));
    }

    let owner = |x: &DVector<f64>| saddles.iter().position(|s| (x - s).norm() < r);
    let mut visits = Vec::new();
    let mut t_prev = traj.t_start();
    let mut inside = owner(&traj.state(0));
    let mut open: Option<(usize, f64, bool)> = inside.map(|i| (i, t_prev, false));
    let times = traj.times();
    for k in 0..traj.len().saturating_sub(1) {
        for j in 1..=SCAN_PER_STEP {
            let t = times[k] + (times[k + 1] - times[k]) * j as f64 / SCAN_PER_STEP as f64;
            let now = owner(&traj.state_at(t));
            if now != inside {
                if let Some(i) = inside {
                    let t_exit = boundary(traj, &saddles[i], r, t_prev, t);
                    let (s, t_enter, complete) = open.take().expect("open visit");
                    visits.push(Visit { saddle: s, t_enter, t_exit, complete });
                }
                if let Some(i) = now {
                    open = Some((i, boundary(traj, &saddles[i], r, t_prev, t), true));
                }
                inside = now;
            }
            t_prev = t;
        }
    }
    if let Some((saddle, t_enter, _)) = open {
        visits.push(Visit { saddle, t_enter, t_exit: traj.t_end(), complete: false });
    }
    Ok(ResidenceProfile { radius: r, saddles: saddles.len(), visits })
}

/// Time in `[a, b]` where the distance to `center` crosses `r`.
fn boundary(traj: &Trajectory, center: &DVector<f64>, r: f64, mut a: f64, mut b: f64) -> f64 {
    let inside = |t: f64| (traj.state_at(t) - center).norm() < r;
    let start = inside(a);
    for _ in 0..BISECTIONS {
        let m = 0.5 * (a + b);
        if inside(m) == start {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}
