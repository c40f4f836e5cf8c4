//! TOML scenario files for the four subcommands.

use std::path::Path;

use pulsetomo::control::DEFAULT_AMPLITUDE_CAP;
use pulsetomo::device::MeasurementModel;
use pulsetomo::hamiltonian::{ControlMode, HamiltonianSpec};
use pulsetomo::optimizer::OptimizerOptions;
use pulsetomo::stateprep::TargetRecipe;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// A parsed config together with the hash of the file it came from.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub config: T,
    pub hash: String,
}

/// First 16 hex digits of the SHA-256 of `text`.
pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn parse<T: DeserializeOwned + Validate>(text: &str) -> Result<Loaded<T>, CliError> {
    let config: T = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    config.validate()?;
    Ok(Loaded {
        config,
        hash: config_hash(text),
    })
}

pub fn load<T: DeserializeOwned + Validate>(path: &Path) -> Result<Loaded<T>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub trait Validate {
    fn validate(&self) -> Result<(), CliError>;
}

fn config_err(e: pulsetomo::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn check(ok: bool, msg: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    pub mode: ControlMode,
    pub slices: usize,
    /// Slice duration in seconds.
    pub tau: f64,
    /// Initial amplitudes are uniform in `[-init_scale, init_scale]` rad/s.
    pub init_scale: f64,
    #[serde(default = "default_cap")]
    pub cap: f64,
}

fn default_cap() -> f64 {
    DEFAULT_AMPLITUDE_CAP
}

impl Validate for PulseConfig {
    fn validate(&self) -> Result<(), CliError> {
        check(self.slices >= 1, "control.slices must be at least 1")?;
        check(self.tau > 0.0 && self.tau.is_finite(), "control.tau must be positive")?;
        check(self.cap > 0.0 && self.cap.is_finite(), "control.cap must be positive")?;
        check(
            (0.0..=self.cap).contains(&self.init_scale),
            "control.init_scale must lie in [0, cap]",
        )
    }
}

/// Single-state reconstruction scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub hamiltonian: HamiltonianSpec,
    pub control: PulseConfig,
    pub target: TargetRecipe,
    #[serde(default = "exact")]
    pub measurement: MeasurementModel,
    pub optimizer: OptimizerOptions,
}

fn exact() -> MeasurementModel {
    MeasurementModel::Exact
}

impl Validate for ReconstructConfig {
    fn validate(&self) -> Result<(), CliError> {
        self.control.validate()?;
        self.measurement.validate().map_err(config_err)?;
        self.optimizer.validate().map_err(config_err)?;
        self.hamiltonian.build().map_err(config_err)?;
        self.target.build(self.hamiltonian.qubits()).map_err(config_err)?;
        Ok(())
    }
}

/// Minimum-slice-count study on the Ising chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub n_min: usize,
    pub n_max: usize,
    /// Evolution time of the dynamical target and total pulse length, seconds.
    pub total_time: f64,
    pub threshold: f64,
    pub mode: ControlMode,
    pub init_scale: f64,
    /// Largest slice count tried before a row is marked unreachable.
    pub max_slices: usize,
    /// Independent random starts per slice count.
    pub restarts: usize,
    /// `fitness_goal` is replaced by `threshold`.
    pub optimizer: OptimizerOptions,
}

impl Validate for ScalingConfig {
    fn validate(&self) -> Result<(), CliError> {
        check(
            2 <= self.n_min && self.n_min <= self.n_max && self.n_max <= 8,
            "scaling needs 2 <= n_min <= n_max <= 8",
        )?;
        check(self.total_time > 0.0, "total_time must be positive")?;
        check((0.0..=1.0).contains(&self.threshold), "threshold must lie in [0, 1]")?;
        check(self.max_slices >= 1, "max_slices must be at least 1")?;
        check(self.restarts >= 1, "restarts must be at least 1")?;
        check(self.init_scale >= 0.0, "init_scale must be non-negative")?;
        self.optimizer.validate().map_err(config_err)
    }
}

/// Estimator cross-checks against the dense oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub hamiltonian: HamiltonianSpec,
    pub mode: ControlMode,
    pub slices: usize,
    /// Slice durations for the rotation-insertion estimator.
    pub taus: Vec<f64>,
    /// Slice duration used for the finite-difference estimator.
    pub fd_tau: f64,
    pub deltas: Vec<f64>,
    pub oracle_delta: f64,
    pub amplitude_scale: f64,
    pub instances: usize,
    /// Random states checked against the commutator identity.
    pub commutator_states: usize,
}

impl Validate for GradcheckConfig {
    fn validate(&self) -> Result<(), CliError> {
        self.hamiltonian.build().map_err(config_err)?;
        check(self.slices >= 1, "slices must be at least 1")?;
        check(self.instances >= 1, "instances must be at least 1")?;
        check(!self.taus.is_empty() && self.taus.iter().all(|&t| t > 0.0), "taus must be positive")?;
        check(!self.deltas.is_empty() && self.deltas.iter().all(|&d| d > 0.0), "deltas must be positive")?;
        check(self.fd_tau > 0.0, "fd_tau must be positive")?;
        check(self.oracle_delta > 0.0, "oracle_delta must be positive")?;
        check(self.amplitude_scale >= 0.0, "amplitude_scale must be non-negative")
    }
}

/// Experiment budgets of conventional tomography and of the two estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub n_min: usize,
    pub n_max: usize,
    pub slices: usize,
    pub iterations: u64,
    /// Register sizes whose per-iteration counts are checked on a live device.
    #[serde(default)]
    pub verify: Vec<usize>,
}

impl Validate for CostConfig {
    fn validate(&self) -> Result<(), CliError> {
        check(1 <= self.n_min && self.n_min <= self.n_max, "cost needs 1 <= n_min <= n_max")?;
        check(self.n_max <= 16, "cost table is limited to n <= 16")?;
        check(self.slices >= 1, "slices must be at least 1")?;
        check(
            self.verify.iter().all(|&n| (2..=8).contains(&n)),
            "verified register sizes must lie in 2..=8",
        )
    }
}
