//! Randomized property suites over axial systems with `a_i ~ U(0.2, 0.9)`
//! and `b_i ~ U(0.1, 1.0)`. Every draw gets its own recorded seed so a
//! failing instance can be rebuilt alone.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{axial_spectrum, determinant_check, perturbation_convergence, visit_check, LyapunovEvaluator, NeuralFieldSystem, NormalizedField};
use crate::activation::Activation;
use crate::error::Result;
use crate::integrate::{integrate, IntegratorConfig};

/// Slack allowed on `dV/dt ≤ 0` and on monotonicity of `V` along samples.
pub const LYAPUNOV_SLACK: f64 = 1e-8;
/// Relative agreement required between the two forms of `dV/dt`.
pub const FORM_TOL: f64 = 1e-9;
/// Distance from the equilibria beyond which `dV/dt` must be strictly negative.
pub const STRICT_DISTANCE: f64 = 1e-3;
/// Ball radius of the visit check.
pub const VISIT_RADIUS: f64 = 0.05;
pub const IMAG_TOL: f64 = 1e-9;
pub const SECULAR_TOL: f64 = 1e-8;
pub const RESIDUAL_TOL: f64 = 1e-12;
pub const RATIO_BAND: (f64, f64) = (0.05, 0.2);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport<T> {
    pub suite: String,
    pub n: usize,
    pub seed: u64,
    pub draws: Vec<T>,
    pub failures: usize,
}

impl<T> SuiteReport<T> {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

trait Verdict {
    fn pass(&self) -> bool;
}

fn run<T: Verdict + Send>(suite: &str, n: usize, draws: usize, seed: u64, f: impl Fn(u64) -> T + Sync) -> SuiteReport<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..draws).map(|_| rng.random()).collect();
    let results: Vec<T> = seeds.par_iter().map(|s| f(*s)).collect();
    let failures = results.iter().filter(|r| !r.pass()).count();
    SuiteReport { suite: suite.to_string(), n, seed, draws: results, failures }
}

/// Levels and biases of one random axial draw.
pub fn random_levels(n: usize, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    let a = (0..n).map(|_| rng.random_range(0.2..0.9)).collect();
    let b = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    (a, b)
}

/// A point of the normalized cube with every `a_i v_i` in `(−0.99, 0.99)`.
fn random_point(a: &[f64], rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(a.len(), |i, _| rng.random_range(-0.99..0.99) / a[i])
}

fn unit_vectors(n: usize) -> Vec<DVector<f64>> {
    (0..n)
        .map(|i| {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            e
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovDraw {
    pub seed: u64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Largest `dV/dt` over the sampled points.
    pub max_derivative: f64,
    /// Largest relative gap between the chain-rule and factored forms.
    pub max_form_gap: f64,
    /// Points farther than the strictness distance with `dV/dt ≥ 0`.
    pub strict_failures: usize,
    /// Consecutive trajectory samples where `V` rose by more than the slack.
    pub monotone_violations: usize,
    pub visit_violations: usize,
    pub error: Option<String>,
}

impl Verdict for LyapunovDraw {
    fn pass(&self) -> bool {
        self.error.is_none()
            && self.max_derivative <= LYAPUNOV_SLACK
            && self.max_form_gap <= FORM_TOL
            && self.strict_failures == 0
            && self.monotone_violations == 0
            && self.visit_violations == 0
    }
}

impl LyapunovDraw {
    pub fn passed(&self) -> bool {
        self.pass()
    }
}

pub fn lyapunov_draw(n: usize, seed: u64, sigma: Activation, points: usize, trajectories: usize) -> LyapunovDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = random_levels(n, &mut rng);
    let mut draw = LyapunovDraw {
        seed,
        a: a.clone(),
        b: b.clone(),
        max_derivative: f64::NEG_INFINITY,
        max_form_gap: 0.0,
        strict_failures: 0,
        monotone_violations: 0,
        visit_violations: 0,
        error: None,
    };
    if let Err(e) = lyapunov_checks(&mut draw, sigma, points, trajectories, &mut rng) {
        draw.error = Some(e.to_string());
    }
    draw
}

fn lyapunov_checks(draw: &mut LyapunovDraw, sigma: Activation, points: usize, trajectories: usize, rng: &mut ChaCha8Rng) -> Result<()> {
    let sys = NeuralFieldSystem::build_axial(&draw.a, &draw.b, sigma)?;
    let ev = LyapunovEvaluator::new(&sys)?;
    let centers = unit_vectors(draw.a.len());
    for _ in 0..points {
        let v = random_point(&draw.a, rng);
        let chain = ev.derivative(&v)?;
        let factored = ev.derivative_factored(&v)?;
        draw.max_derivative = draw.max_derivative.max(chain);
        draw.max_form_gap = draw.max_form_gap.max((chain - factored).abs() / chain.abs().max(1.0));
        let far = centers.iter().all(|c| (&v - c).norm() > STRICT_DISTANCE);
        if far && !(chain < 0.0) {
            draw.strict_failures += 1;
        }
    }
    let field = NormalizedField::new(&sys)?;
    let cfg = IntegratorConfig::adaptive(1e-9, 1e-12, 30.0).with_max_dt(0.25);
    for _ in 0..trajectories {
        let v0 = random_point(&draw.a, rng);
        let traj = integrate(&field, &v0, &cfg)?;
        let states: Vec<DVector<f64>> = traj.states().collect();
        let values = states.iter().map(|v| ev.value(v)).collect::<Result<Vec<f64>>>()?;
        draw.monotone_violations += values.windows(2).filter(|w| w[1] > w[0] + LYAPUNOV_SLACK).count();
        draw.visit_violations += visit_check(&states, &values, &centers, VISIT_RADIUS).violations;
    }
    Ok(())
}

/// Lyapunov monotonicity over `draws` random axial systems of dimension `n`.
pub fn lyapunov_suite(n: usize, draws: usize, seed: u64, sigma: Activation) -> SuiteReport<LyapunovDraw> {
    run("lyapunov", n, draws, seed, |s| lyapunov_draw(n, s, sigma, 500, 10))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDraw {
    pub seed: u64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Positive and negative eigenvalue counts per equilibrium.
    pub counts: Vec<(usize, usize)>,
    pub max_imag: f64,
    pub max_secular_gap: f64,
    /// Equilibria whose spectrum does not interlace the diagonal of `−I + ΣA`.
    pub interlacing_failures: usize,
    pub determinant_sign_mismatches: usize,
    pub error: Option<String>,
}

impl Verdict for SpectralDraw {
    fn pass(&self) -> bool {
        let n = self.a.len();
        self.error.is_none()
            && self.counts.iter().all(|(p, m)| *p + 2 >= n && *m >= 1)
            && self.max_imag < IMAG_TOL
            && self.max_secular_gap < SECULAR_TOL
            && self.interlacing_failures == 0
            && self.determinant_sign_mismatches == 0
    }
}

impl SpectralDraw {
    pub fn passed(&self) -> bool {
        self.pass()
    }
}

pub fn spectral_draw(n: usize, seed: u64, sigma: Activation) -> SpectralDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = random_levels(n, &mut rng);
    let mut draw = SpectralDraw {
        seed,
        a,
        b,
        counts: Vec::new(),
        max_imag: 0.0,
        max_secular_gap: 0.0,
        interlacing_failures: 0,
        determinant_sign_mismatches: 0,
        error: None,
    };
    let result = (|| -> Result<()> {
        let sys = NeuralFieldSystem::build_axial(&draw.a, &draw.b, sigma)?;
        for i in 0..n {
            let sp = axial_spectrum(&sys, i)?;
            draw.counts.push((sp.n_positive, sp.n_negative));
            draw.max_imag = draw.max_imag.max(sp.max_imag);
            draw.max_secular_gap = draw.max_secular_gap.max(sp.secular_mismatch());
            if !sp.interlaces(SECULAR_TOL) {
                draw.interlacing_failures += 1;
            }
            let lambdas: Vec<f64> = (0..50).map(|_| rng.random_range(-3.0..3.0)).collect();
            draw.determinant_sign_mismatches += determinant_check(&sys, i, &lambdas)?.0;
        }
        Ok(())
    })();
    if let Err(e) = result {
        draw.error = Some(e.to_string());
    }
    draw
}

/// Spectral counts and the secular cross-check over random axial systems.
pub fn spectral_suite(n: usize, draws: usize, seed: u64, sigma: Activation) -> SuiteReport<SpectralDraw> {
    run("spectral", n, draws, seed, |s| spectral_draw(n, s, sigma))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationDraw {
    pub seed: u64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub eps: Vec<f64>,
    /// Largest equilibrium residual of the perturbed systems.
    pub max_residual: f64,
    /// `sup|F_ε − F| + sup‖DF_ε − DF‖` per `ε`.
    pub c1: Vec<f64>,
    /// Successive ratios of `c1`.
    pub ratios: Vec<f64>,
    pub error: Option<String>,
}

impl Verdict for PerturbationDraw {
    fn pass(&self) -> bool {
        self.error.is_none()
            && self.max_residual < RESIDUAL_TOL
            && self.c1.len() == self.eps.len()
            && self.c1.windows(2).all(|w| w[1] < w[0])
            && self.ratios.iter().all(|r| (RATIO_BAND.0..=RATIO_BAND.1).contains(r))
    }
}

impl PerturbationDraw {
    pub fn passed(&self) -> bool {
        self.pass()
    }
}

/// Spectral-norm-normalized random direction.
pub fn random_direction(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let norm = crate::linalg::operator_norm(&m);
    m / norm
}

pub fn perturbation_draw(n: usize, seed: u64, sigma: Activation, eps: &[f64], per_axis: usize) -> PerturbationDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = random_levels(n, &mut rng);
    let dir = random_direction(n, &mut rng);
    let mut draw = PerturbationDraw { seed, a, b, eps: eps.to_vec(), max_residual: 0.0, c1: Vec::new(), ratios: Vec::new(), error: None };
    let result = (|| -> Result<()> {
        for &e in eps {
            let x = DMatrix::from_diagonal(&DVector::from_column_slice(&draw.a)) + &dir * e;
            let sys = NeuralFieldSystem::build_perturbed(&x, &draw.b, sigma)?;
            draw.max_residual = draw.max_residual.max(sys.equilibrium_residual());
        }
        let rows = perturbation_convergence(&draw.a, &draw.b, sigma, &dir, eps, &vec![0.0; n], &vec![1.0; n], per_axis)?;
        draw.c1 = rows.iter().filter_map(|r| r.c1()).collect();
        draw.ratios = draw.c1.windows(2).map(|w| w[1] / w[0]).collect();
        Ok(())
    })();
    if let Err(e) = result {
        draw.error = Some(e.to_string());
    }
    draw
}

/// Equilibrium residuals and first-order convergence of perturbed systems.
pub fn perturbation_suite(n: usize, draws: usize, seed: u64, sigma: Activation) -> SuiteReport<PerturbationDraw> {
    let per_axis = grid_per_axis(n);
    run("perturbation", n, draws, seed, |s| perturbation_draw(n, s, sigma, &[1e-2, 1e-3, 1e-4], per_axis))
}

/// Lattice nodes per axis for the sup-norm grid: 21 in three dimensions,
/// fewer above so the lattice stays near 10⁴ points.
pub fn grid_per_axis(n: usize) -> usize {
    (1e4f64.powf(1.0 / n as f64).floor() as usize).clamp(3, 21)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonScan {
    /// `(ε, visit violations)` in the order tested.
    pub tested: Vec<(f64, usize)>,
    /// Largest tested `ε` without violations.
    pub largest_passing: Option<f64>,
}

/// Simulates the perturbed normalized field for each `ε` and applies the
/// visit check with the unperturbed `V`. Trajectories leaving the normalized
/// cube count as violations.
pub fn scan_perturbation_size(
    a: &[f64],
    b: &[f64],
    sigma: Activation,
    direction: &DMatrix<f64>,
    eps_list: &[f64],
    starts: usize,
    seed: u64,
) -> Result<EpsilonScan> {
    let base = NeuralFieldSystem::build_axial(a, b, sigma)?;
    let ev = LyapunovEvaluator::new(&base)?;
    let centers = unit_vectors(a.len());
    let unit = direction / crate::linalg::operator_norm(direction);
    let cfg = IntegratorConfig::adaptive(1e-9, 1e-12, 30.0).with_max_dt(0.25);
    let mut tested = Vec::new();
    for &eps in eps_list {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = base.equilibrium_matrix() + &unit * eps;
        let field = NeuralFieldSystem::build_perturbed(&x, b, sigma).and_then(|s| NormalizedField::new(&s));
        let mut violations = 0;
        match field {
            Err(_) => violations += starts.max(1),
            Ok(field) => {
                for _ in 0..starts {
                    let v0 = random_point(a, &mut rng);
                    let states: Vec<DVector<f64>> = match integrate(&field, &v0, &cfg) {
                        Ok(t) => t.states().collect(),
                        Err(_) => {
                            violations += 1;
                            continue;
                        }
                    };
                    match states.iter().map(|v| ev.value(v)).collect::<Result<Vec<f64>>>() {
                        Ok(values) => violations += visit_check(&states, &values, &centers, VISIT_RADIUS).violations,
                        Err(_) => violations += 1,
                    }
                }
            }
        }
        tested.push((eps, violations));
    }
    let largest_passing = tested.iter().filter(|(_, v)| *v == 0).map(|(e, _)| *e).fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.max(e))));
    Ok(EpsilonScan { tested, largest_passing })
}
