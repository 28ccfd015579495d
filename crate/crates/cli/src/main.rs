//! `cyclefield`: design targets, certify neural-field systems, train and
//! analyze approximators.
//!
//! Settings are resolved as built-in defaults, then the `--profile`, then the
//! `--config` JSON file, then explicit flags. Every artifact embeds the
//! resolved configuration and the build stamp.
//!
//! Exit codes: 0 success, 2 precondition violation, 3 numerical failure,
//! 4 property-suite failure.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Profile, RunConfig};

/// A violated input precondition (exit code 2).
#[derive(Debug)]
pub struct Precondition(pub String);

impl std::fmt::Display for Precondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Precondition {}

/// A failed property suite (exit code 4).
#[derive(Debug)]
pub struct SuiteFailure(pub String);

impl std::fmt::Display for SuiteFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for SuiteFailure {}

#[derive(Parser)]
#[command(name = "cyclefield", version, about = "Heteroclinic cycles, neural fields and learned periodic orbits")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration (JSON). Flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write SVG figures.
    #[arg(long, global = true)]
    plots: bool,
    #[arg(long, global = true, value_enum)]
    profile: Option<Profile>,
}

#[derive(Args)]
struct TargetFlags {
    /// Axis intercepts a_1,a_2,a_3.
    #[arg(long, value_delimiter = ',')]
    a: Option<Vec<f64>>,
    /// Unstable eigenvalues at the three saddles.
    #[arg(long, value_delimiter = ',')]
    lambda_u: Option<Vec<f64>>,
    /// Target JSON written by `design`.
    #[arg(long)]
    target: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a Lotka-Volterra target and report its cycle stability.
    Design {
        #[command(flatten)]
        target: TargetFlags,
    },
    /// Run the neural-field property suites on random systems.
    Verify {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        draws: Option<usize>,
        /// Subset of lyapunov, spectral, perturbation.
        #[arg(long, value_delimiter = ',')]
        suites: Option<Vec<String>>,
    },
    /// Fit the approximator to a target.
    Train {
        #[command(flatten)]
        target: TargetFlags,
        /// Hidden units N.
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        dataset_size: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        jacobian_penalty: Option<f64>,
        /// Train a dense output matrix instead of the block layout.
        #[arg(long)]
        dense: bool,
    },
    /// Integrate the target, or a trained network, from next to the first saddle.
    Simulate {
        #[command(flatten)]
        target: TargetFlags,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        t_max: Option<f64>,
    },
    /// Measure a trained network against its target.
    Analyze {
        #[command(flatten)]
        target: TargetFlags,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        t_max: Option<f64>,
        /// Saddle-ball radius for residence times.
        #[arg(long)]
        ball_radius: Option<f64>,
        #[arg(long)]
        tube_radius: Option<f64>,
    },
    /// Regenerate the figures of an analysis report.
    Report {
        /// `analysis.json` written by `analyze`.
        input: PathBuf,
    },
}

fn apply_target(cfg: &mut RunConfig, t: TargetFlags) -> anyhow::Result<()> {
    let triple = |v: Vec<f64>| -> anyhow::Result<[f64; 3]> {
        v.try_into().map_err(|_| Precondition("expected three comma-separated values".into()).into())
    };
    if let Some(a) = t.a {
        cfg.target.a = triple(a)?;
    }
    if let Some(l) = t.lambda_u {
        cfg.target.lambda_u = triple(l)?;
    }
    if t.target.is_some() {
        cfg.target.file = t.target;
    }
    Ok(())
}

fn resolve(global: Global, command: &mut Command) -> anyhow::Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    if let Some(o) = global.out {
        cfg.out = o;
    }
    if global.threads.is_some() {
        cfg.threads = global.threads;
    }
    cfg.plots |= global.plots;
    if let Some(p) = global.profile {
        cfg.profile = p;
    }
    let take = |t: &mut TargetFlags| TargetFlags { a: t.a.take(), lambda_u: t.lambda_u.take(), target: t.target.take() };
    match command {
        Command::Design { target } => apply_target(&mut cfg, take(target))?,
        Command::Verify { n, draws, suites } => {
            if let Some(n) = n {
                cfg.verify.n = *n;
            }
            if let Some(d) = draws {
                cfg.verify.draws = *d;
            }
            if let Some(s) = suites.take() {
                cfg.verify.suites = s;
            }
        }
        Command::Train { target, hidden, epochs, dataset_size, batch_size, learning_rate, jacobian_penalty, dense } => {
            apply_target(&mut cfg, take(target))?;
            if let Some(h) = hidden {
                cfg.train.hidden = *h;
            }
            if *dense {
                cfg.train.blocks = false;
            }
            let fields: [(&str, Option<serde_json::Value>); 5] = [
                ("epochs", epochs.map(Into::into)),
                ("dataset_size", dataset_size.map(Into::into)),
                ("batch_size", batch_size.map(Into::into)),
                ("learning_rate", learning_rate.map(Into::into)),
                ("jacobian_penalty_weight", jacobian_penalty.map(Into::into)),
            ];
            for (k, v) in fields {
                if let Some(v) = v {
                    cfg.set_optimizer(k, v);
                }
            }
        }
        Command::Simulate { target, checkpoint, t_max } => {
            apply_target(&mut cfg, take(target))?;
            if checkpoint.is_some() {
                cfg.simulate.checkpoint = checkpoint.take();
            }
            if let Some(t) = t_max {
                cfg.simulate.t_max = *t;
            }
        }
        Command::Analyze { target, checkpoint, t_max, ball_radius, tube_radius } => {
            apply_target(&mut cfg, take(target))?;
            if checkpoint.is_some() {
                cfg.analyze.checkpoint = checkpoint.take();
            }
            if let Some(t) = t_max {
                cfg.analyze.options.t_max = *t;
            }
            if let Some(r) = ball_radius {
                cfg.analyze.options.residence_radius = *r;
            }
            if let Some(r) = tube_radius {
                cfg.analyze.options.tube_radius = *r;
            }
        }
        Command::Report { .. } => {}
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut command = cli.command;
    let cfg = resolve(cli.global, &mut command)?;
    if let Some(t) = cfg.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global()?;
    }
    std::fs::create_dir_all(&cfg.out)?;
    match command {
        Command::Design { .. } => commands::design(&cfg),
        Command::Verify { .. } => commands::verify(&cfg),
        Command::Train { .. } => commands::train(&cfg),
        Command::Simulate { .. } => commands::simulate(&cfg),
        Command::Analyze { .. } => commands::analyze(&cfg),
        Command::Report { input } => commands::report(&cfg, &input),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<SuiteFailure>().is_some() {
        return 4;
    }
    if err.downcast_ref::<Precondition>().is_some() {
        return 2;
    }
    match err.downcast_ref::<cyclefield::Error>() {
        Some(e) if e.is_precondition() => 2,
        Some(_) => 3,
        None => 3,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
