//! JSON experiment configuration.
//!
//! Every field has a default, so an empty file (or `{}`) yields the full
//! default setup: 10 devices, 20 MHz, 28 dBm transmit power, 3 GHz CPUs,
//! 32-bit weights, a 25 ms round budget, -110 dBm noise, learning rate 0.001
//! and batch size 128. Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::ModelSpec;
use crate::wireless::{
    db_to_linear, dbm_to_watts, ChannelModel, DeviceProfile, LocalIterations, DEFAULT_BANDWIDTH_HZ,
    DEFAULT_CPU_HZ, DEFAULT_CYCLES_PER_WEIGHT, DEFAULT_NOISE_DBM, DEFAULT_TRANSMIT_DBM,
};
use crate::{Error, Result};

/// Environment variable consulted when neither a flag nor the file sets the seed.
pub const SEED_ENV: &str = "FEDPRUNE_SEED";

/// Mean channel power gain in dB. Chosen so that, with the default devices
/// and the CNN preset, the unpruned baseline averages about 55 ms per round;
/// see the README for why this is far from a physical path loss.
pub const DEFAULT_MEAN_GAIN_DB: f64 = 660.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Optimized bandwidth and pruning ratios.
    Proposed,
    /// Equal bandwidth shares, then the smallest ratio meeting the budget.
    EqualResourcePruning,
    /// No pruning, equal shares; the budget may be exceeded and is flagged.
    PersonalizationOnly,
    /// The whole network is global and pruned with optimized ratios.
    PruningOnly,
}

impl Mode {
    pub const ALL: [Mode; 4] = [
        Mode::Proposed,
        Mode::EqualResourcePruning,
        Mode::PersonalizationOnly,
        Mode::PruningOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Proposed => "proposed",
            Mode::EqualResourcePruning => "equal_resource_pruning",
            Mode::PersonalizationOnly => "personalization_only",
            Mode::PruningOnly => "pruning_only",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config("mode", format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateSchedule {
    /// Personalized steps first, then global steps.
    Alternating,
    /// Both parts stepped from one gradient evaluation per iteration.
    Simultaneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluation {
    /// Unweighted mean of per-device accuracies.
    DeviceAveraged,
    /// Correct predictions over all device test samples.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelPreset {
    Mlp,
    MnistCnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Synthetic,
    Idx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub k_devices: usize,
    pub rounds: usize,
    pub tau_v: u32,
    pub tau_u: u32,
    pub tau_u_probe: u32,
    pub eta_u: f64,
    pub eta_v: f64,
    pub batch_size: usize,
    pub latency_threshold_s: f64,
    pub bandwidth_hz: f64,
    pub q_bits: u32,
    pub transmit_power_dbm: f64,
    pub noise_power_dbm: f64,
    pub cpu_frequency_hz: f64,
    pub cycles_per_weight: f64,
    pub mean_channel_gain_db: f64,
    pub seed: Option<u64>,
    pub mode: Mode,
    pub update_schedule: UpdateSchedule,
    pub evaluation: Evaluation,
    /// Same ratio for every device and round, with equal bandwidth shares.
    pub fixed_pruning_ratio: Option<f64>,
    pub model: ModelPreset,
    pub mlp_hidden: usize,
    pub dataset: DatasetKind,
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
    pub synth_classes: usize,
    pub synth_per_class: usize,
    pub synth_dims: usize,
    pub synth_cluster_std: f64,
    pub labels_per_device: usize,
    pub test_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            k_devices: 10,
            rounds: 100,
            tau_v: 10,
            tau_u: 10,
            tau_u_probe: 1,
            eta_u: 0.001,
            eta_v: 0.001,
            batch_size: 128,
            latency_threshold_s: 0.025,
            bandwidth_hz: DEFAULT_BANDWIDTH_HZ,
            q_bits: 32,
            transmit_power_dbm: DEFAULT_TRANSMIT_DBM,
            noise_power_dbm: DEFAULT_NOISE_DBM,
            cpu_frequency_hz: DEFAULT_CPU_HZ,
            cycles_per_weight: DEFAULT_CYCLES_PER_WEIGHT,
            mean_channel_gain_db: DEFAULT_MEAN_GAIN_DB,
            seed: None,
            mode: Mode::Proposed,
            update_schedule: UpdateSchedule::Alternating,
            evaluation: Evaluation::DeviceAveraged,
            fixed_pruning_ratio: None,
            model: ModelPreset::Mlp,
            mlp_hidden: 32,
            dataset: DatasetKind::Synthetic,
            idx_images: None,
            idx_labels: None,
            synth_classes: 10,
            synth_per_class: 200,
            synth_dims: 16,
            synth_cluster_std: 0.3,
            labels_per_device: 2,
            test_fraction: 0.2,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub rounds: Option<usize>,
    pub mode: Option<Mode>,
}

impl ExperimentConfig {
    /// Parses JSON text; blank text gives the defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = if text.trim().is_empty() {
            ExperimentConfig::default()
        } else {
            serde_json::from_str(text).map_err(|e| Error::config("<document>", e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = Some(seed);
        }
        if let Some(rounds) = o.rounds {
            self.rounds = rounds;
        }
        if let Some(mode) = o.mode {
            self.mode = mode;
        }
    }

    /// Fills an unset seed from [`SEED_ENV`], else 0.
    pub fn resolve_seed(&mut self) -> Result<u64> {
        if self.seed.is_none() {
            let seed = match std::env::var(SEED_ENV) {
                Ok(v) => v.trim().parse().map_err(|_| {
                    Error::config(SEED_ENV, format!("not an unsigned integer: `{v}`"))
                })?,
                Err(_) => 0,
            };
            self.seed = Some(seed);
        }
        Ok(self.seed())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let at_least_one = [
            ("k_devices", self.k_devices),
            ("batch_size", self.batch_size),
            ("mlp_hidden", self.mlp_hidden),
            ("synth_classes", self.synth_classes),
            ("synth_per_class", self.synth_per_class),
            ("synth_dims", self.synth_dims),
            ("labels_per_device", self.labels_per_device),
            ("tau_v", self.tau_v as usize),
            ("tau_u", self.tau_u as usize),
            ("q_bits", self.q_bits as usize),
        ];
        for (key, v) in at_least_one {
            if v < 1 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        for (key, v) in [("eta_u", self.eta_u), ("eta_v", self.eta_v)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(
                    key,
                    format!("must be nonnegative and finite, got {v}"),
                ));
            }
        }
        let positive = [
            ("latency_threshold_s", self.latency_threshold_s),
            ("bandwidth_hz", self.bandwidth_hz),
            ("cpu_frequency_hz", self.cpu_frequency_hz),
            ("cycles_per_weight", self.cycles_per_weight),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(
                    key,
                    format!("must be positive and finite, got {v}"),
                ));
            }
        }
        for (key, v) in [
            ("transmit_power_dbm", self.transmit_power_dbm),
            ("noise_power_dbm", self.noise_power_dbm),
            ("mean_channel_gain_db", self.mean_channel_gain_db),
        ] {
            if !v.is_finite() {
                return Err(Error::config(key, "must be finite"));
            }
        }
        if !(self.synth_cluster_std >= 0.0 && self.synth_cluster_std.is_finite()) {
            return Err(Error::config("synth_cluster_std", "must be nonnegative"));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::config("test_fraction", "must be in [0, 1)"));
        }
        if let Some(rho) = self.fixed_pruning_ratio {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::config(
                    "fixed_pruning_ratio",
                    format!("{rho} is outside [0, 1]"),
                ));
            }
        }
        if self.dataset == DatasetKind::Idx
            && (self.idx_images.is_none() || self.idx_labels.is_none())
        {
            return Err(Error::config(
                "idx_images",
                "idx dataset needs idx_images and idx_labels",
            ));
        }
        if self.model == ModelPreset::MnistCnn
            && self.dataset == DatasetKind::Synthetic
            && self.synth_dims != 784
        {
            return Err(Error::config(
                "synth_dims",
                "the CNN preset needs 784 input features",
            ));
        }
        Ok(())
    }

    pub fn iterations(&self) -> LocalIterations {
        LocalIterations {
            tau_v: self.tau_v,
            tau_u: self.tau_u,
            tau_u_probe: self.tau_u_probe,
        }
    }

    /// Identical devices; shard `k` belongs to device `k`.
    pub fn devices(&self) -> Vec<DeviceProfile> {
        (0..self.k_devices)
            .map(|k| DeviceProfile {
                device_id: k,
                cpu_frequency_hz: self.cpu_frequency_hz,
                cycles_per_weight: self.cycles_per_weight,
                transmit_power_w: dbm_to_watts(self.transmit_power_dbm),
                dataset_shard: k,
            })
            .collect()
    }

    pub fn channel_model(&self) -> ChannelModel {
        ChannelModel {
            mean_gain: db_to_linear(self.mean_channel_gain_db),
            noise_power_w: dbm_to_watts(self.noise_power_dbm),
            total_bandwidth_hz: self.bandwidth_hz,
        }
    }

    /// Network for `features` inputs and `classes` outputs. The pruning-only
    /// baseline makes every layer global.
    pub fn model_spec(&self, features: usize, classes: usize) -> ModelSpec {
        let spec = match self.model {
            ModelPreset::Mlp => ModelSpec::mlp(features, self.mlp_hidden, classes),
            ModelPreset::MnistCnn => ModelSpec::mnist_cnn(classes),
        };
        if self.mode == Mode::PruningOnly {
            spec.all_global()
        } else {
            spec
        }
    }
}

/// Reads and validates a config file. Errors name the file and the key.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_json(&text).map_err(|e| match e {
        Error::Config { key, reason } => Error::Config {
            key: format!("{}: {key}", path.display()),
            reason,
        },
        other => other,
    })
}
