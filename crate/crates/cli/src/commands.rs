use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use cyclefield::analysis::{self, AnalysisOptions, AnalysisReport, Series};
use cyclefield::approx::{self, c1_error, check_side_conditions, ApproxNetwork, Checkpoint};
use cyclefield::lv::LotkaVolterraSystem;
use cyclefield::nfield::suite;
use cyclefield::{integrate, Activation, Error, IntegratorConfig, Trajectory};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{read_json, RunConfig};
use crate::{plot, Precondition, SuiteFailure};

/// Lattice resolution for the reported approximation error.
const ERROR_GRID: usize = 41;

#[derive(Serialize)]
struct Provenance<'a> {
    tool: &'static str,
    version: &'static str,
    build: &'static str,
    command: &'a str,
    config: &'a RunConfig,
}

fn provenance(cfg: &RunConfig, command: &str) -> Value {
    serde_json::to_value(Provenance {
        tool: "cyclefield",
        version: env!("CARGO_PKG_VERSION"),
        build: env!("CYCLEFIELD_BUILD"),
        command,
        config: cfg,
    })
    .expect("provenance serializes")
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let f = BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
    serde_json::to_writer_pretty(f, value)?;
    Ok(())
}

/// `value` serialized as an object with a `provenance` field added.
fn with_provenance(value: &impl Serialize, prov: Value) -> Result<Value> {
    let mut v = serde_json::to_value(value)?;
    match &mut v {
        Value::Object(map) => {
            map.insert("provenance".into(), prov);
            Ok(v)
        }
        _ => Ok(json!({ "provenance": prov, "value": v })),
    }
}

fn write_plots(out: &Path, plots: &[(&str, String)]) -> Result<()> {
    for (name, svg) in plots {
        std::fs::write(out.join(name), svg)?;
    }
    Ok(())
}

fn load_network(path: &Path) -> Result<ApproxNetwork> {
    let ck: Checkpoint = serde_json::from_value(read_json(path)?)
        .map_err(|e| Precondition(format!("{} is not a checkpoint: {e}", path.display())))?;
    Ok(ck.to_network()?)
}

fn run_id(cfg: &RunConfig, target: &LotkaVolterraSystem) -> String {
    let l = target.lambda_u;
    format!("seed{}-lambda{}-{}-{}", cfg.seed, l[0], l[1], l[2])
}

pub fn design(cfg: &RunConfig) -> Result<()> {
    let sys = cfg.target.load()?;
    let stability = sys.saddle_values()?;
    let doc = json!({ "provenance": provenance(cfg, "design"), "system": sys, "stability": stability });
    write_json(&cfg.out.join("target.json"), &doc)?;
    println!(
        "target a={:?} lambda_u={:?}: saddle values {:.4?}, product {:.4} ({})",
        sys.a,
        sys.lambda_u,
        stability.nu,
        stability.product,
        if stability.stable { "stable cycle" } else { "unstable cycle" }
    );
    Ok(())
}

pub fn verify(cfg: &RunConfig) -> Result<()> {
    let v = &cfg.verify;
    if v.n < 3 {
        anyhow::bail!(Precondition(format!("verification needs n ≥ 3, got {}", v.n)));
    }
    let sigma = Activation::from(v.activation);
    let mut reports = Vec::new();
    let mut failed = Vec::new();
    for name in &v.suites {
        let (passed, failures, report) = match name.as_str() {
            "lyapunov" => {
                let r = suite::lyapunov_suite(v.n, v.draws, cfg.seed, sigma);
                (r.passed(), r.failures, serde_json::to_value(&r)?)
            }
            "spectral" => {
                let r = suite::spectral_suite(v.n, v.draws, cfg.seed, sigma);
                (r.passed(), r.failures, serde_json::to_value(&r)?)
            }
            "perturbation" => {
                let r = suite::perturbation_suite(v.n, v.draws, cfg.seed, sigma);
                (r.passed(), r.failures, serde_json::to_value(&r)?)
            }
            other => anyhow::bail!(Precondition(format!("unknown suite `{other}`"))),
        };
        println!("{name}: n={} draws={} failures={failures} {}", v.n, v.draws, if passed { "PASS" } else { "FAIL" });
        if !passed {
            failed.push(name.clone());
        }
        reports.push(json!({ "suite": name, "passed": passed, "failures": failures, "report": report }));
    }
    let doc = json!({ "provenance": provenance(cfg, "verify"), "passed": failed.is_empty(), "suites": reports });
    write_json(&cfg.out.join("verify.json"), &doc)?;
    if !failed.is_empty() {
        anyhow::bail!(SuiteFailure(format!("suites failed: {}", failed.join(", "))));
    }
    Ok(())
}

fn write_loss_trace(path: &Path, train: &[f64], validation: &[f64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_all(b"epoch,train_loss,validation_loss\n")?;
    for k in 0..train.len().max(validation.len()) {
        let cell = |v: Option<&f64>| v.map_or(String::new(), |v| format!("{v:e}"));
        writeln!(w, "{k},{},{}", cell(train.get(k)), cell(validation.get(k)))?;
    }
    Ok(())
}

use std::io::Write;

fn csv_writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let target = cfg.target.load()?;
    let tc = cfg.train_config()?;
    let sigma = Activation::from(cfg.train.activation);
    let prov = provenance(cfg, "train");
    let outcome = match approx::fit(&target, cfg.train.hidden, cfg.train.blocks, sigma, &tc) {
        Ok(o) => o,
        Err(Error::Diverged { epoch, loss, limit, trace }) => {
            write_loss_trace(&cfg.out.join("loss_trace.csv"), &trace, &[])?;
            return Err(Error::Diverged { epoch, loss, limit, trace }.into());
        }
        Err(e) => return Err(e.into()),
    };
    let ck = Checkpoint::from_network(&outcome.net, cfg.seed, prov.clone());
    write_json(&cfg.out.join("checkpoint.json"), &ck)?;
    write_loss_trace(&cfg.out.join("loss_trace.csv"), &outcome.loss_trace, &outcome.validation_trace)?;

    let error = c1_error(&outcome.net, &target, &[0.0; 3], &[1.0; 3], ERROR_GRID)?;
    let side = check_side_conditions(&outcome.net, &target, analysis::DEFAULT_TUBE_RADIUS)?;
    let summary = json!({
        "provenance": prov,
        "final_mse": outcome.final_mse,
        "epochs_run": outcome.epochs_run,
        "best_epoch": outcome.best_epoch,
        "stopped_early": outcome.stopped_early,
        "grid_error": error,
        "side_conditions": side,
    });
    write_json(&cfg.out.join("train.json"), &summary)?;
    if cfg.plots {
        write_plots(&cfg.out, &[("loss.svg", plot::loss_curve(&outcome.loss_trace, &outcome.validation_trace, "training loss"))])?;
    }
    println!(
        "trained N={} for {} epochs: mse {:.3e}, grid sup error {:.4}, jacobian sup error {:.4}",
        cfg.train.hidden, outcome.epochs_run, outcome.final_mse, error.value_sup, error.jacobian_sup
    );
    Ok(())
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let target = cfg.target.load()?;
    let s = &cfg.simulate;
    let x0 = target.perturbed_start(0, s.start_offset)?;
    let int = IntegratorConfig::default().with_t_max(s.t_max).with_max_dt(s.max_dt);
    let (what, traj): (&str, Trajectory) = match &s.checkpoint {
        Some(path) => ("network", integrate(&load_network(path)?, &x0, &int)?),
        None => ("target", target.simulate(&x0, &int)?),
    };
    let section = analysis::place_section(&target)?;
    let returns = analysis::detect_periodic_orbit(&traj, &section);
    traj.write_csv(csv_writer(&cfg.out.join("trajectory.csv"))?)?;
    analysis::write_crossings_csv(&returns, csv_writer(&cfg.out.join("crossings.csv"))?)?;
    let doc = json!({
        "provenance": provenance(cfg, "simulate"),
        "system": what,
        "start": x0.as_slice(),
        "section": section,
        "first_return_time": analysis::first_return_time(&traj, &section).ok(),
        "returns": returns,
    });
    write_json(&cfg.out.join("simulate.json"), &doc)?;
    if cfg.plots {
        let series = Series::from_trajectory(&traj, 2000);
        write_plots(&cfg.out, &[("timeseries.svg", plot::time_series(&series, &format!("{what} trajectory")))])?;
    }
    println!(
        "{what}: {} steps to t={}, {} crossings, signature {:?}",
        traj.len(),
        traj.t_end(),
        returns.crossing_times.len(),
        returns.signature
    );
    Ok(())
}

pub fn analyze(cfg: &RunConfig) -> Result<()> {
    let path = cfg.analyze.checkpoint.as_ref().ok_or_else(|| Precondition("analyze needs --checkpoint".into()))?;
    let net = load_network(path)?;
    let target = cfg.target.load()?;
    let opts: &AnalysisOptions = &cfg.analyze.options;
    let (report, _) = analysis::analyze_network(&net, &target, opts, &run_id(cfg, &target), cfg.seed, Some(path.display().to_string()))?;
    write_json(&cfg.out.join("analysis.json"), &with_provenance(&report, provenance(cfg, "analyze"))?)?;
    analysis::write_crossings_csv(&report.returns, csv_writer(&cfg.out.join("crossings.csv"))?)?;
    if cfg.plots {
        write_plots(&cfg.out, &plot::report_plots(&report))?;
    }
    println!(
        "{}: period {}, T_g {}, residence {:?}, tube fraction {:.3}",
        report.run_id,
        report.converged_period.map_or("none".into(), |p| format!("{p:.4}")),
        report.t_g.map_or("none".into(), |t| format!("{t:.4}")),
        report.residence_means.iter().map(|m| m.map(|v| (v * 1e4).round() / 1e4)).collect::<Vec<_>>(),
        report.tube_fraction
    );
    Ok(())
}

pub fn report(cfg: &RunConfig, input: &Path) -> Result<()> {
    let report: AnalysisReport = serde_json::from_value(read_json(input)?)
        .map_err(|e| Precondition(format!("{} is not an analysis report: {e}", input.display())))?;
    let plots = plot::report_plots(&report);
    write_plots(&cfg.out, &plots)?;
    println!("wrote {} figures for {}", plots.len(), report.run_id);
    Ok(())
}
