use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use wishartlab::sde_sim::Scheme;
use wishartlab::wishart_dist::SampleMethod;
use wishartlab::{ProcessParams, PsdMatrix, WishartParams};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Validate,
    Laplace,
    Density,
    Sample,
    Simulate,
    Verify,
    Hitprob,
    Girsanov,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Laplace => "laplace",
            Command::Density => "density",
            Command::Sample => "sample",
            Command::Simulate => "simulate",
            Command::Verify => "verify",
            Command::Hitprob => "hitprob",
            Command::Girsanov => "girsanov",
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub report: Option<String>,
    pub csv: Option<String>,
}

/// One experiment. Which fields are required depends on the command.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub command: Option<Command>,
    pub params: Option<WishartParams>,
    pub process: Option<ProcessParams>,
    /// Target process for `girsanov`.
    pub target: Option<ProcessParams>,
    pub x: Option<PsdMatrix>,
    /// Starting vectors for the OU-squares scheme.
    pub y: Option<Vec<Vec<f64>>>,
    pub u: Option<PsdMatrix>,
    pub xi: Option<PsdMatrix>,
    pub t: Option<f64>,
    #[serde(rename = "T")]
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub max_terms: Option<usize>,
    pub u_grid: Option<Vec<PsdMatrix>>,
    pub eps: Option<f64>,
    pub scheme: Option<Scheme>,
    pub method: Option<SampleMethod>,
    pub store_every: Option<usize>,
    /// Sizes for the `verify` battery.
    pub mc_draws: Option<usize>,
    pub mc_paths: Option<usize>,
    pub random_instances: Option<usize>,
    #[serde(default)]
    pub outputs: Outputs,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.check()?;
        Ok(config)
    }

    pub fn check(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let positive = [("t", self.t), ("T", self.t_end), ("dt", self.dt), ("tol", self.tol), ("eps", self.eps)];
        for (name, value) in positive {
            if let Some(v) = value {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(CliError::Config(format!("{name} must be positive and finite, got {v}")));
                }
            }
        }
        let counts = [
            ("n", self.n),
            ("max_terms", self.max_terms),
            ("store_every", self.store_every),
            ("mc_draws", self.mc_draws),
            ("mc_paths", self.mc_paths),
            ("random_instances", self.random_instances),
        ];
        for (name, value) in counts {
            if value == Some(0) {
                return Err(CliError::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Pulls a required field out of the config or reports which one is missing.
pub fn need<'a, T>(value: &'a Option<T>, name: &str, command: Command) -> Result<&'a T, CliError> {
    value
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("`{}` requires the `{name}` field", command.name())))
}
