use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::directions::{Space, TrainConfig};
use crate::dissect::DEFAULT_FRACTION;
use crate::error::{Error, Result};
use crate::intervene::{LossWeights, Schedule, DEFAULT_VERIFY_TOL};
use crate::numgrad::UpsampleMode;
use crate::stylegen::ArchSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Random,
    Planted,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Self::Random),
            "planted" => Ok(Self::Planted),
            _ => Err(Error::InvalidArgument(format!("unknown backend `{s}`"))),
        }
    }
}

/// Fully resolved settings of one command. Every field has a default;
/// reports embed the resolved value verbatim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub backend: Backend,
    /// Replaces the backend's default architecture (random backend only).
    pub arch: Option<ArchSpec>,
    pub n_samples: usize,
    pub attribute: usize,
    pub space: Space,
    pub train: TrainConfig,
    pub sample_index: usize,
    pub beta: f64,
    /// Fixed `‖Δs_n‖`; unset rescales to `‖Δs_z‖`.
    pub gamma: Option<f64>,
    pub loss: LossWeights,
    pub schedule: Schedule,
    pub verify_tol: f64,
    pub t_list: Vec<f64>,
    pub fraction: f64,
    pub dissect_samples: usize,
    pub upsample: UpsampleMode,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            backend: Backend::Planted,
            arch: None,
            n_samples: 2000,
            attribute: 0,
            space: Space::S,
            train: TrainConfig::default(),
            sample_index: 0,
            beta: 3.0,
            gamma: None,
            loss: LossWeights::default(),
            schedule: Schedule::default(),
            verify_tol: DEFAULT_VERIFY_TOL,
            t_list: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            fraction: DEFAULT_FRACTION,
            dissect_samples: 100,
            upsample: UpsampleMode::Bilinear,
            jobs: 1,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Missing(path.display().to_string()),
            _ => Error::Io(e),
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.schedule.validate()?;
        if let Some(a) = &self.arch {
            a.validate()?;
        }
        if !self.beta.is_finite() {
            return Err(Error::InvalidArgument("beta must be finite".into()));
        }
        if self.gamma.is_some_and(|g| !(g.is_finite() && g > 0.0)) {
            return Err(Error::InvalidArgument("gamma must be positive".into()));
        }
        if self.t_list.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidArgument("t values must be ≥ 0".into()));
        }
        if self.jobs == 0 {
            return Err(Error::InvalidArgument("jobs must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_file_overrides_only_given_fields() {
        let c = RunConfig::from_toml("seed = 3\nspace = \"Z\"\n[schedule]\nsteps = 5\n").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.space, Space::Z);
        assert_eq!(c.schedule.steps, 5);
        assert_eq!(c.schedule.lr, 0.05);
        assert_eq!(c.n_samples, 2000);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("sed = 3").is_err());
    }
}
