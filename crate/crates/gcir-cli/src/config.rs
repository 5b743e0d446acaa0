//! Experiment configuration: JSON document, defaults, validation.

use gcir::model::{ModelParams, TransportPlan};
use gcir::sim::{Scheme, SimConfig};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    Coupling,
    Harnack,
    LogHarnack,
    Gradient,
    Measure,
    Isoperimetric,
    SuperPoincare,
    Optimality,
    All,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Coupling => "coupling",
            Experiment::Harnack => "harnack",
            Experiment::LogHarnack => "log-harnack",
            Experiment::Gradient => "gradient",
            Experiment::Measure => "measure",
            Experiment::Isoperimetric => "isoperimetric",
            Experiment::SuperPoincare => "super-poincare",
            Experiment::Optimality => "optimality",
            Experiment::All => "all",
        }
    }

    /// Experiments that lean on the Harnack-type hypotheses.
    pub fn needs_admissible(&self) -> bool {
        matches!(
            self,
            Experiment::Coupling
                | Experiment::Harnack
                | Experiment::LogHarnack
                | Experiment::Gradient
                | Experiment::All
        )
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "simulate" => Ok(Experiment::Simulate),
            "coupling" => Ok(Experiment::Coupling),
            "harnack" => Ok(Experiment::Harnack),
            "log-harnack" => Ok(Experiment::LogHarnack),
            "gradient" => Ok(Experiment::Gradient),
            "measure" => Ok(Experiment::Measure),
            "isoperimetric" => Ok(Experiment::Isoperimetric),
            "super-poincare" => Ok(Experiment::SuperPoincare),
            "optimality" => Ok(Experiment::Optimality),
            "all" => Ok(Experiment::All),
            other => Err(format!(
                "unknown experiment '{other}'; expected one of simulate, coupling, harnack, \
                 log-harnack, gradient, measure, isoperimetric, super-poincare, optimality, all"
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub alpha: f64,
    pub delta: f64,
    pub h: f64,
}

fn default_horizon() -> f64 {
    1.0
}
fn default_steps() -> usize {
    4096
}
fn default_paths() -> usize {
    100_000
}
fn default_scheme() -> Scheme {
    Scheme::ReflectedEuler
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            n_steps: default_steps(),
            n_paths: default_paths(),
            seed: 0,
            scheme: default_scheme(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub p: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimalitySection {
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_bound")]
    pub bound: f64,
}

fn default_lambdas() -> Vec<f64> {
    vec![0.75, 0.99]
}
fn default_eps() -> f64 {
    0.1
}
fn default_bound() -> f64 {
    1e6
}

impl Default for OptimalitySection {
    fn default() -> Self {
        Self {
            lambdas: default_lambdas(),
            eps: default_eps(),
            bound: default_bound(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: String,
    /// Cap on the number of trajectories written to paths.csv.
    #[serde(default = "default_dump_paths")]
    pub max_dump_paths: usize,
    #[serde(default)]
    pub write_paths: bool,
}

fn default_out_dir() -> String {
    "runs".to_string()
}
fn default_dump_paths() -> usize {
    100
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            max_dump_paths: default_dump_paths(),
            write_paths: false,
        }
    }
}

fn default_experiment() -> Experiment {
    Experiment::All
}
fn default_scale() -> f64 {
    1.0
}
fn default_x0() -> f64 {
    1.0
}
fn default_r_grid() -> Vec<f64> {
    vec![1e-3, 1e-4, 1e-5, 1e-6, 1e-8, 1e-10, 0.02, 0.1, 0.5]
}
fn default_sp_r() -> Vec<f64> {
    vec![0.5, 0.1, 0.02]
}

/// The on-disk configuration document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default = "default_experiment")]
    pub experiment: Experiment,
    /// Starting point for the plain-simulation experiment.
    #[serde(default = "default_x0")]
    pub x0: f64,
    /// Single coupling plan; defaults to (0.5, 2.0).
    #[serde(default)]
    pub plan: Option<PlanSection>,
    /// Plan set for the verification sweeps; defaults built in.
    #[serde(default)]
    pub plans: Option<Vec<PlanSection>>,
    /// Horizon set for the verification sweeps; defaults to [sim.horizon].
    #[serde(default)]
    pub horizons: Option<Vec<f64>>,
    /// Restrict the test-function family to these identifiers.
    #[serde(default)]
    pub functions: Option<Vec<String>>,
    #[serde(default = "default_r_grid")]
    pub r_grid: Vec<f64>,
    #[serde(default = "default_sp_r")]
    pub sp_r_values: Vec<f64>,
    #[serde(default)]
    pub optimality: OptimalitySection,
    /// Debug multiplier on every proven constant.
    #[serde(default = "default_scale")]
    pub scale_constant: f64,
    #[serde(default)]
    pub output: OutputSection,
}

/// A manifest wraps the resolved config with run metadata; re-ingesting it
/// reproduces the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub meta: ManifestMeta,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestMeta {
    pub lib_version: String,
    pub cli_version: String,
    pub created_utc: String,
    pub seed: u64,
    pub n_reports: usize,
    pub n_violated: usize,
}

#[derive(Debug)]
pub enum ConfigError {
    Parse(String),
    Validation { field: String, reason: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse(msg) => write!(f, "config parse error: {msg}"),
            ConfigError::Validation { field, reason } => {
                write!(f, "config validation error: {field}: {reason}")
            }
        }
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    /// Parse a config document, accepting either a raw config or a manifest
    /// produced by a previous run.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let config_value = if value.get("config").is_some() && value.get("meta").is_some() {
            value
                .get("config")
                .cloned()
                .expect("checked above")
        } else {
            value
        };
        serde_json::from_value(config_value).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Field-precise validation; returns the parsed model on success.
    pub fn validate(&self) -> Result<ModelParams, ConfigError> {
        if let Some(err) =
            ModelParams::violations(self.model.alpha, self.model.delta, self.model.h)
                .into_iter()
                .next()
        {
            let (field, reason) = match err {
                gcir::Error::OutOfRange { field, requirement, .. } => {
                    (field.to_string(), format!("must satisfy {requirement}"))
                }
                other => ("model".to_string(), other.to_string()),
            };
            let reason = if field == "h" {
                "must lie in (1/2,1)".to_string()
            } else {
                reason
            };
            return Err(ConfigError::Validation { field, reason });
        }
        let params = ModelParams::new(self.model.alpha, self.model.delta, self.model.h)
            .expect("violations checked above");

        if self.experiment.needs_admissible() && !params.harnack_admissible() {
            return Err(ConfigError::Validation {
                field: "alpha".to_string(),
                reason: format!(
                    "the {} experiment requires alpha >= h/2 (got alpha = {}, h/2 = {})",
                    self.experiment.name(),
                    self.model.alpha,
                    self.model.h / 2.0
                ),
            });
        }
        if self.experiment.needs_admissible() && !(params.kappa() > 0.0) {
            return Err(ConfigError::Validation {
                field: "delta".to_string(),
                reason: format!(
                    "coupling constants need delta > h/2 (got delta = {})",
                    self.model.delta
                ),
            });
        }
        if self.sim.n_steps == 0 || self.sim.n_paths == 0 {
            return Err(ConfigError::Validation {
                field: "sim".to_string(),
                reason: "n_steps and n_paths must be positive".to_string(),
            });
        }
        if !(self.sim.horizon > 0.0) {
            return Err(ConfigError::Validation {
                field: "sim.horizon".to_string(),
                reason: "must be positive".to_string(),
            });
        }
        if !(self.scale_constant > 0.0) {
            return Err(ConfigError::Validation {
                field: "scale_constant".to_string(),
                reason: "must be positive".to_string(),
            });
        }
        if !(self.x0 >= 0.0) {
            return Err(ConfigError::Validation {
                field: "x0".to_string(),
                reason: "must be nonnegative".to_string(),
            });
        }
        for (name, grid) in [("r_grid", &self.r_grid), ("sp_r_values", &self.sp_r_values)] {
            if grid.iter().any(|&r| !(r > 0.0)) {
                return Err(ConfigError::Validation {
                    field: name.to_string(),
                    reason: "entries must be positive".to_string(),
                });
            }
        }
        for lambda in &self.optimality.lambdas {
            if !(*lambda > 0.0 && *lambda < 1.0) {
                return Err(ConfigError::Validation {
                    field: "optimality.lambdas".to_string(),
                    reason: format!("lambda = {lambda} must lie in (0,1)"),
                });
            }
        }
        Ok(params)
    }

    pub fn sim_config(&self, horizon: f64) -> SimConfig {
        SimConfig::new(
            horizon,
            self.sim.n_steps,
            self.sim.n_paths,
            self.sim.seed,
            self.sim.scheme,
        )
    }

    /// The coupling plan (single), horizon taken from the sim section.
    pub fn coupling_plan(&self) -> Result<TransportPlan, ConfigError> {
        let section = self.plan.unwrap_or(PlanSection {
            x: 0.5,
            y: 2.0,
            p: None,
        });
        TransportPlan::new(section.x, section.y, self.sim.horizon, section.p).map_err(|e| {
            ConfigError::Validation {
                field: "plan".to_string(),
                reason: e.to_string(),
            }
        })
    }

    /// Plan set for the verification sweeps.
    pub fn verification_plans(&self) -> Result<Vec<TransportPlan>, ConfigError> {
        let sections = self.plans.clone().unwrap_or_else(|| {
            vec![
                PlanSection { x: 0.0, y: 1.0, p: Some(2.0) },
                PlanSection { x: 0.5, y: 1.0, p: Some(2.0) },
                PlanSection { x: 1.0, y: 1.2, p: Some(4.0) },
            ]
        });
        sections
            .into_iter()
            .map(|s| {
                TransportPlan::new(s.x, s.y, self.sim.horizon, s.p.or(Some(2.0))).map_err(|e| {
                    ConfigError::Validation {
                        field: "plans".to_string(),
                        reason: e.to_string(),
                    }
                })
            })
            .collect()
    }

    pub fn verification_horizons(&self) -> Vec<f64> {
        self.horizons
            .clone()
            .unwrap_or_else(|| vec![self.sim.horizon])
    }
}
