//! Per-round resource decisions and modeled latency, separate from training so
//! the accounting can be run at full model size without touching weights.

use serde::{Deserialize, Serialize};

use crate::allocator::{equal_share_allocation, solve_bandwidth, AllocationInstance};
use crate::config::{ExperimentConfig, Mode};
use crate::model::pruned_count;
use crate::wireless::{uplink_rate, ChannelState, DeviceProfile, LatencyBreakdown, PartitionSizes};
use crate::Result;

/// Slack allowed when checking a latency against the threshold.
pub const LATENCY_TOLERANCE_S: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevicePlan {
    pub bandwidth_fraction: f64,
    pub pruning_ratio: f64,
    /// Modeled latency; zero for a skipped device.
    pub latency_s: f64,
    /// Left out of the round because even `rho = 1` misses the threshold.
    pub skipped: bool,
    /// Participates but overruns the threshold (unpruned baselines).
    pub exceeds_threshold: bool,
    /// Whether importance-score probe steps run (only when pruning).
    pub probe: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundPlan {
    pub round: u64,
    pub lambda_star: f64,
    pub global_weights: usize,
    pub devices: Vec<DevicePlan>,
}

impl RoundPlan {
    pub fn round_latency_s(&self) -> f64 {
        self.devices.iter().map(|d| d.latency_s).fold(0.0, f64::max)
    }

    /// Retained global weights summed over participating devices.
    pub fn communicated_weights(&self) -> usize {
        self.devices
            .iter()
            .filter(|d| !d.skipped)
            .map(|d| self.global_weights - pruned_count(d.pruning_ratio, self.global_weights))
            .sum()
    }
}

/// Chooses fractions and ratios for one round under `cfg.mode` (or the fixed
/// ratio override) and evaluates every device's modeled latency.
pub fn plan_round(
    cfg: &ExperimentConfig,
    devices: &[DeviceProfile],
    channel: &ChannelState,
    sizes: PartitionSizes,
) -> Result<RoundPlan> {
    let k = devices.len();
    let iters = cfg.iterations();
    let equal = 1.0 / k as f64;
    let (fractions, ratios, skipped, lambda_star) = match (cfg.fixed_pruning_ratio, cfg.mode) {
        (Some(rho), _) => (vec![equal; k], vec![rho; k], Vec::new(), 0.0),
        (None, Mode::PersonalizationOnly) => (vec![equal; k], vec![0.0; k], Vec::new(), 0.0),
        (None, mode) => {
            let inst = AllocationInstance::from_devices(
                cfg.latency_threshold_s,
                devices,
                channel,
                sizes,
                iters,
                cfg.q_bits,
            );
            let alloc = if mode == Mode::EqualResourcePruning {
                equal_share_allocation(&inst)?
            } else {
                solve_bandwidth(&inst)?
            };
            (
                alloc.fractions,
                alloc.pruning_ratios,
                alloc.infeasible_devices,
                alloc.lambda_star,
            )
        }
    };

    let mut plans = Vec::with_capacity(k);
    for (i, dev) in devices.iter().enumerate() {
        if skipped.contains(&i) {
            plans.push(DevicePlan {
                bandwidth_fraction: 0.0,
                pruning_ratio: 1.0,
                latency_s: 0.0,
                skipped: true,
                exceeds_threshold: false,
                probe: false,
            });
            continue;
        }
        let (b, rho) = (fractions[i], ratios[i]);
        let probe = rho > 0.0;
        let mut it = iters;
        if !probe {
            it.tau_u_probe = 0;
        }
        let rate = uplink_rate(b, channel, dev);
        let latency_s = LatencyBreakdown::new(dev, sizes, it, cfg.q_bits, rate, rho)?.total_s;
        plans.push(DevicePlan {
            bandwidth_fraction: b,
            pruning_ratio: rho,
            latency_s,
            skipped: false,
            exceeds_threshold: latency_s > cfg.latency_threshold_s + LATENCY_TOLERANCE_S,
            probe,
        });
    }
    Ok(RoundPlan {
        round: channel.round,
        lambda_star,
        global_weights: sizes.global,
        devices: plans,
    })
}

/// Plans `cfg.rounds` rounds on the channels `run_experiment` would draw,
/// without training.
pub fn plan_schedule(cfg: &ExperimentConfig, sizes: PartitionSizes) -> Result<Vec<RoundPlan>> {
    let devices = cfg.devices();
    let channel = cfg.channel_model();
    (1..=cfg.rounds as u64)
        .map(|g| {
            plan_round(
                cfg,
                &devices,
                &channel.sample(cfg.seed(), g, devices.len()),
                sizes,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;

    fn cnn_sizes() -> PartitionSizes {
        ModelSpec::mnist_cnn(10).sizes()
    }

    #[test]
    fn proposed_meets_threshold_and_baseline_does_not() {
        let cfg = ExperimentConfig {
            rounds: 5,
            ..ExperimentConfig::default()
        };
        for plan in plan_schedule(&cfg, cnn_sizes()).unwrap() {
            assert!(plan
                .devices
                .iter()
                .all(|d| d.skipped || !d.exceeds_threshold));
            assert!(plan.round_latency_s() <= cfg.latency_threshold_s + LATENCY_TOLERANCE_S);
        }
        let base = ExperimentConfig {
            mode: Mode::PersonalizationOnly,
            ..cfg.clone()
        };
        let plans = plan_schedule(&base, cnn_sizes()).unwrap();
        assert!(plans
            .iter()
            .any(|p| p.round_latency_s() > cfg.latency_threshold_s));
        for p in &plans {
            assert_eq!(p.communicated_weights(), 10 * cnn_sizes().global);
        }
    }

    #[test]
    fn fixed_ratio_uses_equal_shares() {
        let cfg = ExperimentConfig {
            fixed_pruning_ratio: Some(0.5),
            rounds: 1,
            ..ExperimentConfig::default()
        };
        let plan = &plan_schedule(
            &cfg,
            PartitionSizes {
                personalized: 10,
                global: 11,
            },
        )
        .unwrap()[0];
        for d in &plan.devices {
            assert_eq!((d.bandwidth_fraction, d.pruning_ratio), (0.1, 0.5));
        }
        // Half of 11 rounds up to 6 pruned, 5 kept.
        assert_eq!(plan.communicated_weights(), 50);
    }
}
