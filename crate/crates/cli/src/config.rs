//! Run configuration: defaults, then the profile, then the JSON file, then
//! command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use cyclefield::analysis::AnalysisOptions;
use cyclefield::approx::TrainConfig;
use cyclefield::lv::LotkaVolterraSystem;
use cyclefield::ActivationKind;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TargetSettings {
    pub a: [f64; 3],
    pub lambda_u: [f64; 3],
    /// A target written by `design`; takes precedence over `a` and `lambda_u`.
    pub file: Option<PathBuf>,
}

impl Default for TargetSettings {
    fn default() -> Self {
        TargetSettings { a: [1.0; 3], lambda_u: [0.6; 3], file: None }
    }
}

impl TargetSettings {
    pub fn load(&self) -> Result<LotkaVolterraSystem> {
        match &self.file {
            Some(path) => {
                let v: Value = read_json(path)?;
                let sys = v.get("system").cloned().unwrap_or(v);
                Ok(serde_json::from_value(sys).with_context(|| format!("{} is not a target", path.display()))?)
            }
            None => Ok(LotkaVolterraSystem::build(self.a, self.lambda_u)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifySettings {
    pub n: usize,
    pub draws: usize,
    pub suites: Vec<String>,
    pub activation: ActivationKind,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            n: 3,
            draws: 100,
            suites: vec!["lyapunov".into(), "spectral".into(), "perturbation".into()],
            activation: ActivationKind::Tanh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub hidden: usize,
    pub blocks: bool,
    pub activation: ActivationKind,
    /// Fields of the optimizer configuration laid over the profile defaults.
    pub optimizer: Value,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings { hidden: 45, blocks: true, activation: ActivationKind::Tanh, optimizer: Value::Object(Default::default()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateSettings {
    /// Network to integrate; the target is integrated when absent.
    pub checkpoint: Option<PathBuf>,
    pub t_max: f64,
    pub start_offset: f64,
    pub max_dt: f64,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        SimulateSettings { checkpoint: None, t_max: 600.0, start_offset: 1e-3, max_dt: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzeSettings {
    pub checkpoint: Option<PathBuf>,
    pub options: AnalysisOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub plots: bool,
    pub profile: Profile,
    pub target: TargetSettings,
    pub verify: VerifySettings,
    pub train: TrainSettings,
    pub simulate: SimulateSettings,
    pub analyze: AnalyzeSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("out"),
            threads: None,
            plots: false,
            profile: Profile::Desk,
            target: TargetSettings::default(),
            verify: VerifySettings::default(),
            train: TrainSettings::default(),
            simulate: SimulateSettings::default(),
            analyze: AnalyzeSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(serde_json::from_value(read_json(path)?).with_context(|| format!("invalid run configuration {}", path.display()))?)
    }

    /// Profile defaults with the `train.optimizer` fields and the run seed
    /// applied.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let base = match self.profile {
            Profile::Desk => TrainConfig::desk(),
            Profile::Paper => TrainConfig::paper(),
        };
        let mut v = serde_json::to_value(base)?;
        if let (Value::Object(dst), Value::Object(src)) = (&mut v, &self.train.optimizer) {
            for (k, val) in src {
                if !dst.contains_key(k) {
                    anyhow::bail!(crate::Precondition(format!("unknown optimizer field `{k}`")));
                }
                dst.insert(k.clone(), val.clone());
            }
        }
        let mut cfg: TrainConfig = serde_json::from_value(v).context("invalid optimizer settings")?;
        cfg.seed = self.seed;
        Ok(cfg)
    }

    pub fn set_optimizer(&mut self, key: &str, value: Value) {
        if let Value::Object(map) = &mut self.train.optimizer {
            map.insert(key.to_string(), value);
        } else {
            self.train.optimizer = serde_json::json!({ key: value });
        }
    }
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| crate::Precondition(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text).map_err(|e| crate::Precondition(format!("{} is not JSON: {e}", path.display())))?)
}
