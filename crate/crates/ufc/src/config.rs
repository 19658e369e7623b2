//! Run configuration, read from a TOML file.
//!
//! Every section and key is optional; missing values take the defaults
//! below. A minimal file can therefore be empty.
//!
//! ```toml
//! output_dir = "run"
//! window = 15
//! stride = 1
//! members = 10
//! training_seed = 1
//!
//! [training]
//! learning_rate = 3e-4
//! epochs = 10
//!
//! [scenario]
//! seed = 2024
//! training_flights = 8
//!
//! [scenario.target]
//! rotor_jitter = 0.06
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ufc_core::nn::{Architecture, TrainConfig};
use ufc_core::sim::ScenarioConfig;
use ufc_core::ufc::default_threshold_grid;

use crate::error::{Error, Result};

/// Layer widths of each member. The input width follows from `window`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub conv_channels: [usize; 2],
    pub kernel_size: usize,
    pub feature_dim: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let a = Architecture::default();
        Self {
            conv_channels: a.conv_channels,
            kernel_size: a.kernel_size,
            feature_dim: a.feature_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every artifact a command writes.
    pub output_dir: PathBuf,
    /// Window length L; samples span `L + 1` log rows.
    pub window: usize,
    pub stride: usize,
    /// Ensemble size N.
    pub members: usize,
    /// Member `k` is trained with seed `training_seed + k` unless
    /// `member_seeds` lists the seeds explicitly.
    pub training_seed: u64,
    pub member_seeds: Option<Vec<u64>>,
    /// Calibration grid of entropy thresholds, nats.
    pub threshold_grid: Vec<f64>,
    /// Member counts of the sweep table.
    pub sweep_members: Vec<usize>,
    /// Thresholds of the sweep table. An accept-all column is always added
    /// in front.
    pub sweep_thresholds: Vec<f64>,
    pub network: NetworkConfig,
    pub training: TrainConfig,
    pub scenario: ScenarioConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("run"),
            window: 15,
            stride: 1,
            members: 10,
            training_seed: 1,
            member_seeds: None,
            threshold_grid: default_threshold_grid(),
            sweep_members: vec![3, 5, 7, 10],
            sweep_thresholds: vec![1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4],
            network: NetworkConfig::default(),
            training: TrainConfig::default(),
            scenario: ScenarioConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes to TOML")
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            window: self.window + 1,
            conv_channels: self.network.conv_channels,
            kernel_size: self.network.kernel_size,
            feature_dim: self.network.feature_dim,
        }
    }

    pub fn member_seeds(&self) -> Vec<u64> {
        match &self.member_seeds {
            Some(seeds) => seeds.clone(),
            None => (0..self.members as u64)
                .map(|k| self.training_seed.wrapping_add(k))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.window == 0 || self.stride == 0 {
            return bad("window and stride must be at least 1".into());
        }
        if self.members == 0 {
            return bad("members must be at least 1".into());
        }
        if let Some(seeds) = &self.member_seeds {
            if seeds.len() != self.members {
                return bad(format!(
                    "{} member seeds listed for {} members",
                    seeds.len(),
                    self.members
                ));
            }
            let mut sorted = seeds.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return bad("member seeds must be distinct".into());
            }
        }
        if self.threshold_grid.is_empty() {
            return bad("threshold grid is empty".into());
        }
        if self
            .threshold_grid
            .iter()
            .chain(&self.sweep_thresholds)
            .any(|t| t.is_nan() || *t < 0.0)
        {
            return bad("thresholds must be non-negative numbers".into());
        }
        if self.sweep_members.contains(&0) {
            return bad("sweep member counts must be at least 1".into());
        }
        let span = (self.window + 1) as f64 * self.scenario.log_dt;
        if self.scenario.duration < span {
            return bad(format!(
                "flights of {} s are shorter than one window ({span} s)",
                self.scenario.duration
            ));
        }
        let core = |e: ufc_core::Error| Error::Config(e.to_string());
        self.architecture().validate().map_err(core)?;
        self.training.validate().map_err(core)?;
        self.scenario.validate().map_err(core)
    }
}
