//! Uplink channel and latency model.
//!
//! All quantities are SI: hertz, watts, seconds, bits. dBm values are
//! converted with [`dbm_to_watts`] before they reach this module.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

pub const DEFAULT_BANDWIDTH_HZ: f64 = 20.0e6;
pub const DEFAULT_NOISE_DBM: f64 = -110.0;
pub const DEFAULT_TRANSMIT_DBM: f64 = 28.0;
pub const DEFAULT_CPU_HZ: f64 = 3.0e9;
pub const DEFAULT_CYCLES_PER_WEIGHT: f64 = 20.0;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Static compute and radio parameters of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub device_id: usize,
    pub cpu_frequency_hz: f64,
    pub cycles_per_weight: f64,
    pub transmit_power_w: f64,
    pub dataset_shard: usize,
}

impl DeviceProfile {
    pub fn new(
        device_id: usize,
        cpu_frequency_hz: f64,
        cycles_per_weight: f64,
        transmit_power_w: f64,
    ) -> Result<Self> {
        let dev = DeviceProfile {
            device_id,
            cpu_frequency_hz,
            cycles_per_weight,
            transmit_power_w,
            dataset_shard: device_id,
        };
        dev.validate()?;
        Ok(dev)
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("cpu_frequency_hz", self.cpu_frequency_hz),
            ("cycles_per_weight", self.cycles_per_weight),
            ("transmit_power_w", self.transmit_power_w),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Seconds to run `iterations` updates over `weights` parameters.
    pub fn compute_time(&self, iterations: u32, weights: f64) -> f64 {
        f64::from(iterations) * self.cycles_per_weight * weights / self.cpu_frequency_hz
    }
}

/// Per-round channel realization shared by all devices of a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub round: u64,
    pub gains_linear: Vec<f64>,
    pub noise_power_w: f64,
    pub total_bandwidth_hz: f64,
}

impl ChannelState {
    pub fn snr(&self, dev: &DeviceProfile) -> f64 {
        self.gains_linear[dev.device_id] * dev.transmit_power_w / self.noise_power_w
    }

    /// Rate the device would get with the whole band, `B log2(1 + SNR)`.
    pub fn full_band_rate(&self, dev: &DeviceProfile) -> f64 {
        self.total_bandwidth_hz * (1.0 + self.snr(dev)).log2()
    }
}

/// OFDMA uplink rate for a bandwidth fraction `b`. Indexes the channel by
/// `dev.device_id`.
pub fn uplink_rate(b: f64, ch: &ChannelState, dev: &DeviceProfile) -> f64 {
    debug_assert!((0.0..=1.0).contains(&b), "bandwidth fraction {b}");
    b * ch.full_band_rate(dev)
}

fn check_ratio(rho: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::RatioOutOfRange(rho))
    }
}

/// Local computation time of one round with pruning ratio `rho` on the
/// global part: personalized steps, unpruned probe steps, masked global steps.
pub fn computation_latency(
    dev: &DeviceProfile,
    n_v: usize,
    n_u: usize,
    rho: f64,
    tau_v: u32,
    tau_u: u32,
    tau_u_probe: u32,
) -> Result<f64> {
    check_ratio(rho)?;
    let (n_v, n_u) = (n_v as f64, n_u as f64);
    let cycles = f64::from(tau_v) * dev.cycles_per_weight * n_v
        + f64::from(tau_u_probe) * dev.cycles_per_weight * n_u
        + (1.0 - rho) * f64::from(tau_u) * dev.cycles_per_weight * n_u;
    Ok(cycles / dev.cpu_frequency_hz)
}

/// Time to upload the retained `(1 - rho) n_u` weights at `q_bits` each.
pub fn uplink_latency(q_bits: u32, rho: f64, n_u: usize, rate: f64) -> Result<f64> {
    check_ratio(rho)?;
    let payload_bits = f64::from(q_bits) * (1.0 - rho) * n_u as f64;
    if payload_bits == 0.0 {
        return Ok(0.0);
    }
    if rate <= 0.0 {
        return Err(Error::ZeroRate { payload_bits });
    }
    Ok(payload_bits / rate)
}

/// Synchronous round: the slowest device sets the pace.
pub fn round_latency(per_device_totals: &[f64]) -> Result<f64> {
    per_device_totals
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(Error::EmptyRound)
}

/// Parameter counts of the two model parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSizes {
    pub personalized: usize,
    pub global: usize,
}

/// Local iteration counts of one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalIterations {
    pub tau_v: u32,
    pub tau_u: u32,
    pub tau_u_probe: u32,
}

/// Per-device latency terms. The global terms are full size; pruning scales
/// them by `1 - rho` in `total_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub t_cmp_personalized_s: f64,
    pub t_cmp_global_s: f64,
    pub t_cmp_probe_s: f64,
    pub t_com_global_s: f64,
    pub total_s: f64,
}

impl LatencyBreakdown {
    /// `rate` is the uplink rate at the allocated bandwidth fraction. A zero
    /// rate gives an infinite full-size upload term, which only a fully
    /// pruned global part can afford.
    pub fn new(
        dev: &DeviceProfile,
        sizes: PartitionSizes,
        iters: LocalIterations,
        q_bits: u32,
        rate: f64,
        rho: f64,
    ) -> Result<Self> {
        check_ratio(rho)?;
        let n_u = sizes.global as f64;
        let payload = f64::from(q_bits) * n_u;
        let t_com_global_s = if payload == 0.0 {
            0.0
        } else if rate > 0.0 {
            payload / rate
        } else {
            f64::INFINITY
        };
        let mut out = LatencyBreakdown {
            t_cmp_personalized_s: dev.compute_time(iters.tau_v, sizes.personalized as f64),
            t_cmp_global_s: dev.compute_time(iters.tau_u, n_u),
            t_cmp_probe_s: dev.compute_time(iters.tau_u_probe, n_u),
            t_com_global_s,
            total_s: 0.0,
        };
        out.total_s = out.total_at(rho);
        Ok(out)
    }

    pub fn total_at(&self, rho: f64) -> f64 {
        let global = if rho >= 1.0 {
            0.0
        } else {
            (1.0 - rho) * (self.t_cmp_global_s + self.t_com_global_s)
        };
        self.t_cmp_personalized_s + self.t_cmp_probe_s + global
    }
}

/// Rayleigh block fading: exponential power gains, redrawn every round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub mean_gain: f64,
    pub noise_power_w: f64,
    pub total_bandwidth_hz: f64,
}

impl ChannelModel {
    pub fn sample(&self, seed: u64, round: u64, k_devices: usize) -> ChannelState {
        let mut rng = stream_rng(seed, Stream::Channel, round);
        ChannelState {
            round,
            gains_linear: draw_gains(&mut rng, self.mean_gain, k_devices),
            noise_power_w: self.noise_power_w,
            total_bandwidth_hz: self.total_bandwidth_hz,
        }
    }
}

fn draw_gains<R: Rng>(rng: &mut R, mean_gain: f64, k: usize) -> Vec<f64> {
    let exp = Exp::new(1.0).expect("unit rate");
    (0..k)
        .map(|_| loop {
            // Exp can return exactly 0; gains must stay positive.
            let g: f64 = exp.sample(rng) * mean_gain;
            if g > 0.0 {
                break g;
            }
        })
        .collect()
}

/// Draws `k_devices` i.i.d. exponential gains with mean `mean_gain`, using the
/// default noise floor and bandwidth.
pub fn sample_channel(seed: u64, mean_gain: f64, k_devices: usize) -> ChannelState {
    ChannelModel {
        mean_gain,
        noise_power_w: dbm_to_watts(DEFAULT_NOISE_DBM),
        total_bandwidth_hz: DEFAULT_BANDWIDTH_HZ,
    }
    .sample(seed, 0, k_devices)
}
