//! Acceptance checks. Every test writes one `PASS`/`FAIL` line to stderr
//! (uncaptured, so it shows up in the test log) and then asserts the verdict.
//!
//! Trained networks are shared between tests through `OnceLock`s; the
//! training time is charged to the first test that needs them and reported
//! in every line that uses them.

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use cyclefield::analysis::{
    analyze_network, block_means, detect_periodic_orbit, place_section, AnalysisOptions, AnalysisReport, Signature,
};
use cyclefield::approx::{c1_error, fit, init_network, lift, mse, sample_dataset, train, ApproxNetwork, BlockLayout, TrainConfig};
use cyclefield::lv::LotkaVolterraSystem;
use cyclefield::nfield::suite::{lyapunov_suite, perturbation_suite, spectral_suite};
use cyclefield::{integrate, Activation, IntegratorConfig, VectorField};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const HIDDEN: usize = 45;
const SYMMETRIC_SEEDS: u64 = 10;
const ASYMMETRIC_SEEDS: u64 = 5;

fn verdict(id: u32, title: &str, pass: bool, detail: &str, elapsed: Duration) {
    let line = format!(
        "acceptance {id:02} {} {title}: {detail} [{:.1}s]\n",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

/// One trained and analyzed run.
struct Run {
    seed: u64,
    net: ApproxNetwork,
    report: AnalysisReport,
    grid_error: f64,
    seconds: f64,
}

fn train_and_analyze(target: &LotkaVolterraSystem, seed: u64) -> Run {
    let start = Instant::now();
    let cfg = TrainConfig::desk().with_seed(seed);
    let out = fit(target, HIDDEN, true, Activation::tanh(), &cfg).expect("training");
    let grid_error = c1_error(&out.net, target, &[0.0; 3], &[1.0; 3], 41).expect("grid error").value_sup;
    let (report, _) = analyze_network(&out.net, target, &AnalysisOptions::default(), &format!("seed{seed}"), seed, None)
        .expect("analysis");
    let seconds = start.elapsed().as_secs_f64();
    let line = format!(
        "  trained lambda_u {:?} seed {seed}: {} epochs, mse {:.2e}, {seconds:.1}s\n",
        target.lambda_u, out.epochs_run, out.final_mse
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    Run { seed, net: out.net, report, grid_error, seconds }
}

fn symmetric_runs() -> &'static [Run] {
    static RUNS: OnceLock<Vec<Run>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let target = LotkaVolterraSystem::symmetric(0.6).unwrap();
        (0..SYMMETRIC_SEEDS).map(|s| train_and_analyze(&target, s)).collect()
    })
}

fn asymmetric_runs() -> &'static [Run] {
    static RUNS: OnceLock<Vec<Run>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let target = LotkaVolterraSystem::build([1.0; 3], [0.6, 0.9, 0.6]).unwrap();
        (0..ASYMMETRIC_SEEDS).map(|s| train_and_analyze(&target, s)).collect()
    })
}

fn total_seconds(runs: &[Run]) -> f64 {
    runs.iter().map(|r| r.seconds).sum()
}

#[test]
fn a01_target_saddle_spectra() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut stable = true;
    for l in [0.2, 0.6, 0.9] {
        let sys = LotkaVolterraSystem::symmetric(l).unwrap();
        for i in 0..3 {
            let jac = sys.jacobian(&sys.equilibrium(i)).unwrap();
            let eig = jac.complex_eigenvalues();
            let mut re: Vec<f64> = eig.iter().map(|z| z.re).collect();
            re.sort_by(f64::total_cmp);
            let imag = eig.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
            let expected = [-1.0, -1.0, l];
            worst = worst.max(imag);
            for (a, b) in re.iter().zip(expected) {
                worst = worst.max((a - b).abs());
            }
        }
        let nu = sys.saddle_values().unwrap();
        let product: f64 = sys.lambda_u.iter().map(|l| 1.0 / l).product();
        stable &= nu.stable && product > 1.0 && (nu.product - product).abs() < 1e-12;
    }
    let elapsed = start.elapsed();
    let pass = worst < 1e-9 && stable && elapsed < Duration::from_secs(1);
    verdict(1, "target saddle spectra", pass, &format!("max eigenvalue error {worst:.2e}, all cycles stable: {stable}"), elapsed);
    assert!(pass);
}

#[test]
fn a02_no_cycle_certificate() {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut failures = 0;
    for n in 3..=6 {
        let r = lyapunov_suite(n, 100, 2000 + n as u64, Activation::tanh());
        failures += r.failures;
        details.push(format!("n={n}: {}", r.failures));
    }
    let elapsed = start.elapsed();
    let pass = failures == 0 && elapsed < Duration::from_secs(300);
    verdict(2, "Lyapunov certificate", pass, &format!("violations per n {}", details.join(", ")), elapsed);
    assert!(pass);
}

#[test]
fn a03_axial_spectral_counts() {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut failures = 0;
    for n in 4..=8 {
        let r = spectral_suite(n, 100, 3000 + n as u64, Activation::tanh());
        failures += r.failures;
        details.push(format!("n={n}: {}", r.failures));
    }
    let elapsed = start.elapsed();
    let pass = failures == 0 && elapsed < Duration::from_secs(120);
    verdict(3, "axial spectral counts", pass, &format!("violations per n {}", details.join(", ")), elapsed);
    assert!(pass);
}

#[test]
fn a04_perturbation_robustness() {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut failures = 0;
    let mut ratios = (f64::INFINITY, f64::NEG_INFINITY);
    for n in 3..=6 {
        let r = perturbation_suite(n, 25, 4000 + n as u64, Activation::tanh());
        failures += r.failures;
        for d in &r.draws {
            for q in &d.ratios {
                ratios = (ratios.0.min(*q), ratios.1.max(*q));
            }
        }
        details.push(format!("n={n}: {}", r.failures));
    }
    let elapsed = start.elapsed();
    let pass = failures == 0 && elapsed < Duration::from_secs(60);
    verdict(
        4,
        "perturbation robustness",
        pass,
        &format!("violations per n {}; ratios in [{:.4}, {:.4}]", details.join(", "), ratios.0, ratios.1),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn a05_target_returns_lengthen() {
    let start = Instant::now();
    let sys = LotkaVolterraSystem::symmetric(0.6).unwrap();
    let section = place_section(&sys).unwrap();
    let x0 = sys.perturbed_start(0, 1e-3).unwrap();
    let traj = sys.simulate(&x0, &IntegratorConfig::default().with_t_max(1e5)).unwrap();
    let rec = detect_periodic_orbit(&traj, &section);
    let first: Vec<f64> = rec.intervals.iter().take(5).copied().collect();
    let increasing = first.len() == 5 && first.windows(2).all(|w| w[1] > w[0]);
    let elapsed = start.elapsed();
    let pass = increasing && rec.signature == Signature::Heteroclinic && elapsed < Duration::from_secs(30);
    let shown: Vec<String> = first.iter().map(|t| format!("{t:.1}")).collect();
    verdict(5, "target return intervals grow", pass, &format!("T_1..T_5 = [{}], {:?}", shown.join(", "), rec.signature), elapsed);
    assert!(pass);
}

/// Teacher and student share the shape; only the initialization differs.
fn self_distillation() -> (f64, Duration) {
    let start = Instant::now();
    let layout = BlockLayout::uniform(3, HIDDEN).unwrap();
    let teacher = init_network(3, HIDDEN, Some(layout.clone()), Activation::tanh(), 7001).unwrap();
    let cfg = TrainConfig {
        dataset_size: 20_000,
        epochs: 300,
        patience: 300,
        batch_size: 256,
        learning_rate: 3e-3,
        lr_decay: 0.98,
        ..TrainConfig::default()
    };
    let data = sample_dataset(&teacher, &cfg.domain_lo, &cfg.domain_hi, cfg.dataset_size, 7002).unwrap();
    let student = init_network(3, HIDDEN, Some(layout), Activation::tanh(), 7003).unwrap();
    let out = train(&student, &data, &cfg).unwrap();
    (mse(&out.net, &data), start.elapsed())
}

#[test]
fn a06_training_accuracy() {
    let runs = symmetric_runs();
    let base = &runs[0];
    let (distill, distill_time) = self_distillation();
    let pass_grid = base.grid_error < 0.05;
    let pass_distill = distill < 1e-6;
    let seconds = base.seconds + distill_time.as_secs_f64();
    let pass = pass_grid && pass_distill && base.seconds < 600.0;
    let others: Vec<String> = runs.iter().map(|r| format!("{:.4}", r.grid_error)).collect();
    verdict(
        6,
        "training accuracy",
        pass,
        &format!(
            "seed {} grid sup error {:.4} (all seeds [{}]); self-distillation mse {distill:.2e}",
            base.seed,
            base.grid_error,
            others.join(", ")
        ),
        Duration::from_secs_f64(seconds),
    );
    assert!(pass);
}

#[test]
fn a07_periodic_orbits() {
    let runs = symmetric_runs();
    let mut lines = Vec::new();
    let mut accepted = 0;
    for r in runs {
        let ok = r.report.periodic_orbit_accepted(0.95);
        accepted += usize::from(ok);
        lines.push(format!(
            "seed {}: period {} contracting {:?} tube {:.3}{}",
            r.seed,
            r.report.converged_period.map_or("none".into(), |p| format!("{p:.3}")),
            r.report.returns.contracting,
            r.report.tube_fraction,
            if ok { "" } else { " rejected" }
        ));
    }
    let seconds = total_seconds(runs);
    let pass = accepted >= 8 && seconds < 900.0;
    verdict(7, "periodic orbits", pass, &format!("{accepted}/{} seeds accepted; {}", runs.len(), lines.join("; ")), Duration::from_secs_f64(seconds));
    assert!(pass);
}

/// Seed averages of the converged period and residence means over the
/// accepted runs.
fn averages(runs: &[Run]) -> Option<(f64, [f64; 3])> {
    let good: Vec<&Run> = runs.iter().filter(|r| r.report.periodic_orbit_accepted(0.95)).collect();
    if good.is_empty() {
        return None;
    }
    let period = good.iter().map(|r| r.report.converged_period.unwrap()).sum::<f64>() / good.len() as f64;
    let mut residence = [0.0; 3];
    for (i, slot) in residence.iter_mut().enumerate() {
        let vals: Vec<f64> = good.iter().filter_map(|r| r.report.residence_means[i]).collect();
        *slot = if vals.is_empty() { f64::NAN } else { vals.iter().sum::<f64>() / vals.len() as f64 };
    }
    Some((period, residence))
}

#[test]
fn a08_residence_and_period_modulation() {
    let sym = symmetric_runs();
    let asym = asymmetric_runs();
    let (pass, detail) = match (averages(sym), averages(asym)) {
        (Some((ps, rs)), Some((pa, ra))) => {
            let shorter_stay = ra[1] < rs[1];
            let shorter_period = pa < ps;
            // 1/λ_u = (1/0.6, 1/0.9, 1/0.6): the second saddle ranks last, the
            // other two tie.
            let ranking = ra[1] < ra[0] && ra[1] < ra[2];
            (
                shorter_stay && shorter_period && ranking,
                format!(
                    "period {pa:.3} vs {ps:.3}; residence asymmetric [{:.3}, {:.3}, {:.3}] vs symmetric [{:.3}, {:.3}, {:.3}]",
                    ra[0], ra[1], ra[2], rs[0], rs[1], rs[2]
                ),
            )
        }
        _ => (false, "no accepted runs to compare".to_string()),
    };
    let seconds = total_seconds(asym);
    let pass = pass && seconds < 900.0;
    verdict(8, "residence and period modulation", pass, &detail, Duration::from_secs_f64(seconds));
    assert!(pass);
}

fn lift_errors(net: &ApproxNetwork, seed: u64) -> (f64, f64) {
    let lifted = lift(net);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut algebraic: f64 = 0.0;
    for _ in 0..100 {
        let y = DVector::from_fn(lifted.hidden(), |_, _| rng.random_range(-1.0..1.0));
        let lhs = lifted.project(&lifted.eval(&y));
        let rhs = net.eval(&lifted.project(&y));
        algebraic = algebraic.max((lhs - rhs).amax());
    }
    let x0 = DVector::from_vec(vec![0.5, 0.3, 0.2]);
    let y0 = lifted.lift_point(&x0).unwrap();
    let cfg = IntegratorConfig::adaptive(1e-11, 1e-13, 50.0);
    let xs = integrate(net, &x0, &cfg).unwrap();
    let ys = integrate(&lifted, &y0, &cfg).unwrap();
    let trajectory = (0..=500)
        .map(|k| {
            let t = 0.1 * k as f64;
            (lifted.project(&ys.state_at(t)) - xs.state_at(t)).amax()
        })
        .fold(0.0, f64::max);
    (algebraic, trajectory)
}

#[test]
fn a09_lift_consistency() {
    let mut worst = (0.0f64, 0.0f64);
    let mut slowest = Duration::ZERO;
    let mut count = 0;
    for r in symmetric_runs().iter().chain(asymmetric_runs()) {
        let start = Instant::now();
        let (a, t) = lift_errors(&r.net, 9000 + r.seed);
        slowest = slowest.max(start.elapsed());
        worst = (worst.0.max(a), worst.1.max(t));
        count += 1;
    }
    let pass = worst.0 < 1e-12 && worst.1 < 1e-6 && slowest < Duration::from_secs(60);
    verdict(
        9,
        "lift consistency",
        pass,
        &format!("{count} checkpoints; max projection error {:.2e}, max trajectory gap {:.2e}", worst.0, worst.1),
        slowest,
    );
    assert!(pass);
}

#[test]
fn a10_block_connectivity() {
    let start = Instant::now();
    // Fixture 1: WP with blocks of sizes (1, 2); means by hand.
    let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
    let s1 = block_means(&m, &BlockLayout::new(vec![1, 2]).unwrap()).unwrap();
    let fixture1 = s1.means == vec![vec![1.0, 2.5], vec![5.5, 7.0]];
    // Fixture 2: constant blocks of 0.25·(3i + j) on a (2, 2, 2) layout.
    let m2 = DMatrix::from_fn(6, 6, |r, c| 0.25 * (3 * (r / 2) + c / 2) as f64);
    let s2 = block_means(&m2, &BlockLayout::uniform(3, 6).unwrap()).unwrap();
    let fixture2 = (0..3).all(|i| (0..3).all(|j| s2.means[i][j] == 0.25 * (3 * i + j) as f64));

    let runs = symmetric_runs();
    let summaries = runs.iter().filter(|r| r.report.block_means.as_ref().is_some_and(|b| b.means.len() == 3)).count();
    // Which population has the strongest self-coupling, per seed.
    let strongest: Vec<usize> = runs
        .iter()
        .filter_map(|r| r.report.block_means.as_ref())
        .map(|b| (0..3).max_by(|&i, &j| b.means[i][i].total_cmp(&b.means[j][j])).unwrap() + 1)
        .collect();
    let second = strongest.iter().filter(|&&k| k == 2).count();
    let pass = fixture1 && fixture2 && summaries == runs.len();
    verdict(
        10,
        "block connectivity",
        pass,
        &format!(
            "fixtures exact: {fixture1}, {fixture2}; {summaries}/{} summaries; strongest self-coupling per seed {strongest:?} (population 2 in {second}, exploratory)",
            runs.len()
        ),
        start.elapsed(),
    );
    assert!(pass);
}
