//! Post-processing of simulated orbits: section returns, period detection,
//! residence near saddles, containment in a tube around the target cycle and
//! block connectivity of lifted networks.

mod connectivity;
mod residence;
mod returns;
mod tube;

pub use connectivity::{block_connectivity_means, block_means, ConnectivitySummary};
pub use residence::{residence_times, ResidenceProfile, Visit, DEFAULT_BALL_RADIUS, LEARNED_BALL_RADIUS};
pub use returns::{
    detect_periodic_orbit, first_return_time, place_section, ReturnRecord, Signature, MIN_CROSSINGS, PERIOD_TOL,
    TRANSIENT_CROSSINGS,
};
pub use tube::{polyline_distance, tube_containment, DEFAULT_TUBE_RADIUS};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::approx::{check_side_conditions, lift, ApproxNetwork, SideConditions};
use crate::error::Result;
use crate::integrate::{integrate, IntegratorConfig, SectionSpec};
use crate::lv::LotkaVolterraSystem;
use crate::trajectory::Trajectory;

/// Arclength spacing of orbit samples for tube containment.
const TUBE_SAMPLE_STEP: f64 = 0.01;
/// Points kept in the report's time series.
const SERIES_POINTS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisOptions {
    /// Offset of the start from `x̄_1` along the unstable direction.
    pub start_offset: f64,
    pub t_max: f64,
    pub max_dt: f64,
    pub residence_radius: f64,
    pub tube_radius: f64,
    /// Horizon for the target run that measures `T_g`.
    pub target_t_max: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            start_offset: 1e-3,
            t_max: 600.0,
            max_dt: 0.1,
            residence_radius: LEARNED_BALL_RADIUS,
            tube_radius: DEFAULT_TUBE_RADIUS,
            target_t_max: 2000.0,
        }
    }
}

/// Uniformly resampled orbit for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
}

impl Series {
    pub fn from_trajectory(traj: &Trajectory, points: usize) -> Self {
        let (t, x) = traj.resample(traj.t_start(), traj.t_end(), points).into_iter().map(|(t, x)| (t, x.iter().copied().collect())).unzip();
        Series { t, x }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub run_id: String,
    pub seed: u64,
    pub target_params: LotkaVolterraSystem,
    pub net_checkpoint_ref: Option<String>,
    /// First return time of the target started on the section.
    #[serde(rename = "T_g")]
    pub t_g: Option<f64>,
    pub return_intervals: Vec<f64>,
    pub converged_period: Option<f64>,
    /// Mean residence per saddle after the transient.
    pub residence_means: Vec<Option<f64>>,
    pub tube_fraction: f64,
    pub side_conditions: SideConditions,
    pub block_means: Option<ConnectivitySummary>,
    pub options: AnalysisOptions,
    pub section: SectionSpec,
    pub start: Vec<f64>,
    /// Start of the window used for residences and tube containment.
    pub t_settle: f64,
    pub returns: ReturnRecord,
    pub residence: ResidenceProfile,
    pub series: Series,
    /// Target reference polyline, for plots.
    pub reference: Vec<Vec<f64>>,
}

impl AnalysisReport {
    /// The acceptance conditions for a periodic run: converged period,
    /// contracting returns, tube containment and a nonvanishing field at the
    /// saddles.
    pub fn periodic_orbit_accepted(&self, min_fraction: f64) -> bool {
        self.converged_period.is_some()
            && self.returns.contracting == Some(true)
            && self.tube_fraction >= min_fraction
            && self.side_conditions.nonvanishing.iter().all(|b| *b)
    }
}

/// The target's first return time, starting on the section point with the
/// zero coordinates lifted to `offset`.
pub fn target_return_time(target: &LotkaVolterraSystem, section: &SectionSpec, offset: f64, t_max: f64) -> Result<f64> {
    let x0 = DVector::from_iterator(3, section.point.iter().map(|&v| if v > 0.0 { v } else { offset }));
    let traj = target.simulate(&x0, &IntegratorConfig::default().with_t_max(t_max))?;
    first_return_time(&traj, section)
}

/// Simulates `net` from next to `x̄_1` and measures it against `target`.
pub fn analyze_network(
    net: &ApproxNetwork,
    target: &LotkaVolterraSystem,
    opts: &AnalysisOptions,
    run_id: &str,
    seed: u64,
    net_checkpoint_ref: Option<String>,
) -> Result<(AnalysisReport, Trajectory)> {
    let section = place_section(target)?;
    let x0 = target.perturbed_start(0, opts.start_offset)?;
    let cfg = IntegratorConfig::default().with_t_max(opts.t_max).with_max_dt(opts.max_dt);
    let traj = integrate(net, &x0, &cfg)?;
    let returns = detect_periodic_orbit(&traj, &section);
    let t_g = target_return_time(target, &section, opts.start_offset, opts.target_t_max).ok();

    let t_settle = returns
        .settled_time()
        .or_else(|| returns.crossing_times.get(TRANSIENT_CROSSINGS).copied())
        .unwrap_or(traj.t_start());
    let residence = residence_times(&traj, &target.equilibria(), opts.residence_radius)?;
    let reference = target.heteroclinic_reference(opts.start_offset)?;
    let samples: Vec<DVector<f64>> =
        traj.arclength_samples(t_settle, traj.t_end(), TUBE_SAMPLE_STEP).into_iter().map(|(_, x)| x).collect();
    let tube_fraction = tube_containment(&samples, &reference, opts.tube_radius);
    let side_conditions = check_side_conditions(net, target, opts.tube_radius)?;
    let block_means = block_connectivity_means(&lift(net)).ok();

    let report = AnalysisReport {
        run_id: run_id.to_string(),
        seed,
        target_params: target.clone(),
        net_checkpoint_ref,
        t_g,
        return_intervals: returns.intervals.clone(),
        converged_period: returns.converged_period,
        residence_means: residence.means_from(t_settle),
        tube_fraction,
        side_conditions,
        block_means,
        options: opts.clone(),
        section,
        start: x0.iter().copied().collect(),
        t_settle,
        returns,
        residence,
        series: Series::from_trajectory(&traj, SERIES_POINTS),
        reference: reference.iter().step_by(5).map(|x| x.iter().copied().collect()).collect(),
    };
    Ok((report, traj))
}

/// Writes one row per crossing: index, time, interval to the next crossing
/// and the crossing point.
pub fn write_crossings_csv<W: std::io::Write>(record: &ReturnRecord, w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let dim = record.crossing_points.first().map_or(0, Vec::len);
    let mut header = vec!["k".to_string(), "t".to_string(), "interval".to_string()];
    header.extend((1..=dim).map(|i| format!("x_{i}")));
    out.write_record(&header)?;
    for (k, (t, x)) in record.crossing_times.iter().zip(&record.crossing_points).enumerate() {
        let mut row = vec![k.to_string(), format!("{t:e}"), record.intervals.get(k).map_or(String::new(), |v| format!("{v:e}"))];
        row.extend(x.iter().map(|v| format!("{v:e}")));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}
