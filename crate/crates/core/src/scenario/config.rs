//! Scenario configuration.
//!
//! Files are flat `key = value` lines with dotted paths, e.g.
//!
//! ```text
//! plant.A = 0.01
//! noise.R = [[1e-6, 0, 0], [0, 1e-6, 0], [0, 0, 1e-6]]
//! attack.mode = "replay_payload"
//! horizon = 5000
//! ```
//!
//! The syntax is TOML with dotted keys. Every key has a default; unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::adversary::AttackConfig;
use crate::channel::ChannelConfig;
use crate::detector::DEFAULT_CALIBRATION_LEN;
use crate::error::{Error, Result};
use crate::estimator::{GateConfig, ResidualMode};
use crate::keystream::PSequenceKey;
use crate::noise::{to_matrix, validate_covariance, NoiseSpec};
use crate::plant::{ControllerParams, PlantParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub chi2_threshold: f64,
    pub residual_mode: ResidualMode,
    /// Diagonal of the initial estimate covariance (m²).
    pub initial_variance: f64,
    /// Initial estimate; defaults to the plant's initial levels.
    pub initial_estimate: Option<[f64; 3]>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            chi2_threshold: GateConfig::default().chi2_threshold,
            residual_mode: ResidualMode::Posterior,
            initial_variance: 1e-4,
            initial_estimate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub plant: PlantParams,
    pub noise: NoiseSpec,
    pub key: PSequenceKey,
    pub channel: ChannelConfig,
    pub attack: AttackConfig,
    pub controller: ControllerParams,
    pub estimator: EstimatorConfig,
    /// Total number of transmission steps.
    pub horizon: usize,
    /// Healthy steps used to compute the thresholds.
    pub calibration_len: usize,
    pub setpoints: [f64; 3],
    pub initial_levels: [f64; 3],
    pub margin: f64,
    pub output_dir: PathBuf,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            plant: PlantParams::default(),
            noise: NoiseSpec::default(),
            key: PSequenceKey::default(),
            channel: ChannelConfig::default(),
            attack: AttackConfig::default(),
            controller: ControllerParams::default(),
            estimator: EstimatorConfig::default(),
            horizon: 5000,
            calibration_len: DEFAULT_CALIBRATION_LEN,
            setpoints: [0.3, 0.2, 0.1],
            initial_levels: [0.0, 0.0, 0.0],
            margin: 1.0,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Sets both the plant-noise and the link seeds.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.noise.rng_seed = seed;
        self.channel.rng_seed = seed;
        self
    }

    /// Channel settings with the shared key filled in.
    pub fn channel_config(&self) -> ChannelConfig {
        ChannelConfig {
            key: self.key,
            ..self.channel
        }
    }

    pub fn setpoints(&self) -> Vector3<f64> {
        Vector3::from(self.setpoints)
    }

    pub fn initial_levels(&self) -> Vector3<f64> {
        Vector3::from(self.initial_levels)
    }

    pub fn resolved_controller(&self) -> Result<ControllerParams> {
        self.controller.resolve(&self.setpoints(), &self.plant)
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.channel.validate()?;
        self.attack.validate()?;
        self.controller.validate()?;
        self.resolved_controller()?;
        validate_covariance("noise.Q", &to_matrix(&self.noise.q))?;
        validate_covariance("noise.R", &to_matrix(&self.noise.r))?;
        if self.calibration_len < 1 {
            return Err(Error::Config("calibration_len must be >= 1".to_string()));
        }
        if self.horizon <= self.calibration_len {
            return Err(Error::Config(format!(
                "horizon {} must exceed calibration_len {}",
                self.horizon, self.calibration_len
            )));
        }
        if self.horizon > u32::MAX as usize {
            return Err(Error::Config("horizon exceeds the 32-bit sequence space".to_string()));
        }
        if !(self.margin.is_finite() && self.margin > 0.0) {
            return Err(Error::Config("margin must be > 0".to_string()));
        }
        if !(self.estimator.chi2_threshold > 0.0) {
            return Err(Error::Config("estimator.chi2_threshold must be > 0".to_string()));
        }
        if !(self.estimator.initial_variance >= 0.0) {
            return Err(Error::Config("estimator.initial_variance must be >= 0".to_string()));
        }
        let levels = self
            .setpoints
            .iter()
            .chain(&self.initial_levels)
            .chain(self.estimator.initial_estimate.iter().flatten());
        for v in levels {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::Config(format!("level {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Every key with its current value, in the accepted file syntax.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
