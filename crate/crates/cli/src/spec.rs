//! Experiment specification: a base training config plus lists of methods
//! (gain overrides), seeds and thresholds whose cross product defines the
//! sweep. An empty JSON object is a valid spec of pure defaults.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use spil_core::trainer::TrainConfig;
use spil_core::{ControlMode, ControllerGains};

use crate::CliError;

/// One sweep method: a display name and the controller gains it runs with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub name: String,
    #[serde(default)]
    pub gains: ControllerGains,
}

impl Default for MethodSpec {
    fn default() -> Self {
        Self { name: ControlMode::SeparatedPi.as_str().into(), gains: ControllerGains::default() }
    }
}

/// Aggregation options for the per-(method, threshold) curve files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AggregateOptions {
    /// Emit the across-seed mean and min/max envelope CSV.
    pub enabled: bool,
}

impl Default for AggregateOptions {
    fn default() -> Self {
        Self { enabled: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    /// Shared training configuration; each cell overrides gains, threshold
    /// and master seed from the sweep lists.
    pub base: TrainConfig,
    pub methods: Vec<MethodSpec>,
    pub seeds: Vec<u64>,
    /// Chance-constraint thresholds (delta values) to sweep.
    pub thresholds: Vec<f64>,
    pub output_dir: String,
    pub aggregate: AggregateOptions,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            base: TrainConfig::default(),
            methods: vec![MethodSpec::default()],
            seeds: vec![0],
            thresholds: vec![0.1],
            output_dir: "runs".into(),
            aggregate: AggregateOptions::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.methods.is_empty() {
            return Err(CliError::Spec("methods: list must be non-empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Spec("seeds: list must be non-empty".into()));
        }
        if self.thresholds.is_empty() {
            return Err(CliError::Spec("thresholds: list must be non-empty".into()));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if m.name.is_empty() {
                return Err(CliError::Spec(format!("methods[{i}].name: must be non-empty")));
            }
            m.gains
                .validate()
                .map_err(|e| CliError::Spec(format!("methods[{i}]: {e}")))?;
        }
        for (i, &d) in self.thresholds.iter().enumerate() {
            if !(d > 0.0 && d < 1.0) {
                return Err(CliError::Spec(format!(
                    "thresholds[{i}]: {d} must be in (0, 1)"
                )));
            }
        }
        let mut probe = self.base.clone();
        for m in &self.methods {
            probe.gains = m.gains;
            for &d in &self.thresholds {
                probe.delta_threshold = d;
                probe
                    .validate()
                    .map_err(|e| CliError::Spec(format!("base (method {}): {e}", m.name)))?;
            }
        }
        Ok(())
    }

    /// The fully resolved training config for one sweep cell.
    pub fn cell_config(&self, method: &MethodSpec, threshold: f64, seed: u64) -> TrainConfig {
        let mut c = self.base.clone();
        c.gains = method.gains;
        c.delta_threshold = threshold;
        c.master_seed = seed;
        c
    }
}

pub fn load_spec(path: &Path) -> Result<ExperimentSpec, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Spec(format!("{}: {e}", path.display())))?;
    let spec: ExperimentSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::Spec(format!("{}: {e}", path.display())))?;
    spec.validate()?;
    Ok(spec)
}
