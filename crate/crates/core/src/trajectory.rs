//! Sampled orbits with cubic Hermite dense output.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Coordinates the integrator advanced the state in. `Log` stores `y = ln x`
/// componentwise; states handed out by [`Trajectory`] are always physical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinates {
    #[default]
    Linear,
    Log,
}

impl Coordinates {
    fn to_physical(self, y: DVector<f64>) -> DVector<f64> {
        match self {
            Coordinates::Linear => y,
            Coordinates::Log => y.map(f64::exp),
        }
    }
}

/// A positive crossing of a section, as found by
/// [`detect_crossings`](crate::integrate::detect_crossings).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub t: f64,
    pub state: Vec<f64>,
    pub section_id: usize,
    /// Set when the transversality derivative at the crossing is below the
    /// grazing tolerance.
    pub grazing: bool,
}

/// Cubic Hermite interpolant over one accepted step.
#[derive(Debug, Clone)]
pub struct HermiteSegment<'a> {
    pub t0: f64,
    pub t1: f64,
    pub y0: &'a DVector<f64>,
    pub y1: &'a DVector<f64>,
    pub d0: &'a DVector<f64>,
    pub d1: &'a DVector<f64>,
}

impl HermiteSegment<'_> {
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        self.y0 * h00 + self.d0 * (h10 * h) + self.y1 * h01 + self.d1 * (h11 * h)
    }

    pub fn derivative(&self, t: f64) -> DVector<f64> {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let s2 = s * s;
        let dh00 = (6.0 * s2 - 6.0 * s) / h;
        let dh10 = 3.0 * s2 - 4.0 * s + 1.0;
        let dh01 = (-6.0 * s2 + 6.0 * s) / h;
        let dh11 = 3.0 * s2 - 2.0 * s;
        self.y0 * dh00 + self.d0 * dh10 + self.y1 * dh01 + self.d1 * dh11
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    nodes: Vec<DVector<f64>>,
    slopes: Vec<DVector<f64>>,
    coords: Coordinates,
    pub events: Vec<Crossing>,
}

impl Trajectory {
    pub(crate) fn start(t0: f64, y0: DVector<f64>, d0: DVector<f64>, coords: Coordinates) -> Self {
        Trajectory { times: vec![t0], nodes: vec![y0], slopes: vec![d0], coords, events: Vec::new() }
    }

    pub(crate) fn push(&mut self, t: f64, y: DVector<f64>, d: DVector<f64>) {
        debug_assert!(t > *self.times.last().unwrap());
        self.times.push(t);
        self.nodes.push(y);
        self.slopes.push(d);
    }

    /// Builds a trajectory from nodes and slopes in linear coordinates.
    ///
    /// Panics if the lengths differ or the times are not strictly increasing.
    pub fn from_samples(times: Vec<f64>, states: Vec<DVector<f64>>, slopes: Vec<DVector<f64>>) -> Self {
        assert!(!times.is_empty() && times.len() == states.len() && states.len() == slopes.len());
        assert!(times.windows(2).all(|w| w[1] > w[0]), "times must increase");
        Trajectory { times, nodes: states, slopes, coords: Coordinates::Linear, events: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].len()
    }

    pub fn coordinates(&self) -> Coordinates {
        self.coords
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Physical state at node `k`.
    pub fn state(&self, k: usize) -> DVector<f64> {
        self.coords.to_physical(self.nodes[k].clone())
    }

    pub fn states(&self) -> impl Iterator<Item = DVector<f64>> + '_ {
        (0..self.len()).map(move |k| self.state(k))
    }

    pub fn final_state(&self) -> DVector<f64> {
        self.state(self.len() - 1)
    }

    /// Raw node in integration coordinates.
    pub fn node(&self, k: usize) -> &DVector<f64> {
        &self.nodes[k]
    }

    /// Slope at node `k` in integration coordinates.
    pub fn slope(&self, k: usize) -> &DVector<f64> {
        &self.slopes[k]
    }

    /// Dense interpolant over step `k` (between nodes `k` and `k + 1`), in
    /// integration coordinates.
    pub fn segment(&self, k: usize) -> HermiteSegment<'_> {
        HermiteSegment {
            t0: self.times[k],
            t1: self.times[k + 1],
            y0: &self.nodes[k],
            y1: &self.nodes[k + 1],
            d0: &self.slopes[k],
            d1: &self.slopes[k + 1],
        }
    }

    /// Index of the step containing `t`, clamped to the stored range.
    pub fn step_index(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&s| s <= t);
        k.saturating_sub(1).min(self.len().saturating_sub(2))
    }

    /// Physical state at time `t` from the dense interpolant.
    pub fn state_at(&self, t: f64) -> DVector<f64> {
        if self.len() == 1 {
            return self.state(0);
        }
        let k = self.step_index(t);
        self.coords.to_physical(self.segment(k).eval(t))
    }

    /// Physical velocity at time `t` from the dense interpolant.
    pub fn velocity_at(&self, t: f64) -> DVector<f64> {
        if self.len() == 1 {
            return self.coords.to_physical(self.slopes[0].clone());
        }
        let seg = self.segment(self.step_index(t));
        let dy = seg.derivative(t);
        match self.coords {
            Coordinates::Linear => dy,
            Coordinates::Log => seg.eval(t).map(f64::exp).component_mul(&dy),
        }
    }

    /// Resamples the physical orbit on a uniform time grid.
    pub fn resample(&self, t0: f64, t1: f64, count: usize) -> Vec<(f64, DVector<f64>)> {
        let count = count.max(2);
        (0..count)
            .map(|k| {
                let t = t0 + (t1 - t0) * k as f64 / (count - 1) as f64;
                (t, self.state_at(t))
            })
            .collect()
    }

    /// Samples the physical orbit on `[t0, t1]` so that consecutive samples are
    /// at most about `step` apart in arclength. Both ends are included.
    pub fn arclength_samples(&self, t0: f64, t1: f64, step: f64) -> Vec<(f64, DVector<f64>)> {
        const PROBES: usize = 8;
        let t0 = t0.max(self.t_start());
        let t1 = t1.min(self.t_end());
        let mut out = vec![(t0, self.state_at(t0))];
        if !(t1 > t0) || self.len() < 2 {
            return out;
        }
        let first = self.step_index(t0);
        let last = self.step_index(t1);
        for k in first..=last {
            let ta = self.times[k].max(t0);
            let tb = self.times[k + 1].min(t1);
            if !(tb > ta) {
                continue;
            }
            let mut prev = out.last().unwrap().1.clone();
            for j in 1..=PROBES {
                let (pa, pb) = (ta + (tb - ta) * (j - 1) as f64 / PROBES as f64, ta + (tb - ta) * j as f64 / PROBES as f64);
                let end = self.state_at(pb);
                let m = (((&end - &prev).norm() / step).ceil() as usize).max(1);
                for q in 1..m {
                    let t = pa + (pb - pa) * q as f64 / m as f64;
                    out.push((t, self.state_at(t)));
                }
                out.push((pb, end.clone()));
                prev = end;
            }
        }
        out
    }

    /// Writes `t,x_1,…,x_n` rows of the stored nodes.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("x_{i}")));
        out.write_record(&header)?;
        for k in 0..self.len() {
            let mut row = vec![format!("{:e}", self.times[k])];
            row.extend(self.state(k).iter().map(|v| format!("{v:e}")));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.nodes.iter().all(|y| y.iter().all(|v| v.is_finite()))
    }
}
