//! Joint bandwidth-fraction and pruning-ratio allocation for one round.
//!
//! Each device must satisfy
//!
//! ```text
//! T_per + (1 - rho) (T_cmp_g + q N / (b R)) <= T_th
//! ```
//!
//! where `R = B log2(1 + SNR)` is its full-band rate. The smallest feasible
//! ratio is `rho(b) = 1 - b V1 / (b V2 + V3)` with `V1 = (T_th - T_per) R`,
//! `V2 = T_cmp_g R` and `V3 = q N`. The sum of ratios is convex and decreasing
//! in every `b`, so the optimum spends the whole band. Stationarity gives
//! `b(lambda) = (sqrt(V1 V3 / lambda) - V3) / V2`; we clip it to `[0, 1]` and
//! bisect on `lambda` until the fractions sum to one.

mod oracle;

pub use oracle::{oracle_allocation, project_onto_simplex};

use serde::{Deserialize, Serialize};

use crate::wireless::{ChannelState, DeviceProfile, LocalIterations, PartitionSizes};
use crate::{Error, Result};

pub const SUM_TOLERANCE: f64 = 1e-10;
pub const MAX_BISECTION_STEPS: usize = 200;
pub const LAMBDA_MIN: f64 = 1e-30;
pub const LAMBDA_MAX: f64 = 1e30;

/// Per-round solver input. Per-device fields are parallel vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationInstance {
    pub latency_threshold_s: f64,
    /// Personalized compute plus the unpruned probe steps; neither shrinks
    /// with the pruning ratio.
    pub t_cmp_per_s: Vec<f64>,
    /// Full-size masked-global compute time.
    pub t_cmp_g_s: Vec<f64>,
    /// `q N_u`, the unpruned global part in bits.
    pub payload_bits: Vec<f64>,
    /// Rate at `b = 1`.
    pub spectral_rate_hz_coeff: Vec<f64>,
}

/// The rational-function coefficients of one device.
#[derive(Debug, Clone, Copy)]
struct Coeffs {
    v1: f64,
    v2: f64,
    v3: f64,
}

impl Coeffs {
    fn ratio(self, b: f64) -> f64 {
        1.0 - b * self.v1 / (b * self.v2 + self.v3)
    }
}

impl AllocationInstance {
    /// Builds an instance from device, channel and model parameters.
    pub fn from_devices(
        latency_threshold_s: f64,
        devices: &[DeviceProfile],
        channel: &ChannelState,
        sizes: PartitionSizes,
        iters: LocalIterations,
        q_bits: u32,
    ) -> Self {
        let n_u = sizes.global as f64;
        let mut inst = AllocationInstance {
            latency_threshold_s,
            t_cmp_per_s: Vec::with_capacity(devices.len()),
            t_cmp_g_s: Vec::with_capacity(devices.len()),
            payload_bits: Vec::with_capacity(devices.len()),
            spectral_rate_hz_coeff: Vec::with_capacity(devices.len()),
        };
        for dev in devices {
            inst.t_cmp_per_s.push(
                dev.compute_time(iters.tau_v, sizes.personalized as f64)
                    + dev.compute_time(iters.tau_u_probe, n_u),
            );
            inst.t_cmp_g_s.push(dev.compute_time(iters.tau_u, n_u));
            inst.payload_bits.push(f64::from(q_bits) * n_u);
            inst.spectral_rate_hz_coeff
                .push(channel.full_band_rate(dev));
        }
        inst
    }

    pub fn len(&self) -> usize {
        self.t_cmp_per_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_cmp_per_s.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.len();
        if k == 0 {
            return Err(Error::InvalidInstance("no devices".into()));
        }
        for (name, v) in [
            ("t_cmp_g_s", &self.t_cmp_g_s),
            ("payload_bits", &self.payload_bits),
            ("spectral_rate_hz_coeff", &self.spectral_rate_hz_coeff),
        ] {
            if v.len() != k {
                return Err(Error::InvalidInstance(format!(
                    "{name} has {} entries, expected {k}",
                    v.len()
                )));
            }
        }
        if !(self.latency_threshold_s > 0.0 && self.latency_threshold_s.is_finite()) {
            return Err(Error::InvalidInstance(
                "latency_threshold_s must be positive".into(),
            ));
        }
        if let Some(bad) = self
            .t_cmp_per_s
            .iter()
            .copied()
            .find(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err(Error::InvalidInstance(format!(
                "t_cmp_per_s must be nonnegative and finite, found {bad}"
            )));
        }
        let all = self
            .t_cmp_g_s
            .iter()
            .chain(&self.payload_bits)
            .chain(&self.spectral_rate_hz_coeff);
        if let Some(bad) = all.copied().find(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInstance(format!(
                "per-device values must be positive and finite, found {bad}"
            )));
        }
        Ok(())
    }

    /// `T_th - T_per`: the time left for the global part.
    pub fn slack(&self, k: usize) -> f64 {
        self.latency_threshold_s - self.t_cmp_per_s[k]
    }

    fn coeffs(&self, k: usize) -> Coeffs {
        let r = self.spectral_rate_hz_coeff[k];
        Coeffs {
            v1: self.slack(k) * r,
            v2: self.t_cmp_g_s[k] * r,
            v3: self.payload_bits[k],
        }
    }

    /// Sum of unclipped pruning-ratio bounds, the solved objective.
    pub fn objective(&self, fractions: &[f64]) -> f64 {
        fractions
            .iter()
            .enumerate()
            .map(|(k, &b)| self.coeffs(k).ratio(b))
            .sum()
    }

    /// Derivative of device `k`'s objective term at `b`.
    pub fn objective_slope(&self, k: usize, b: f64) -> f64 {
        let c = self.coeffs(k);
        let d = b * c.v2 + c.v3;
        -c.v1 * c.v3 / (d * d)
    }

    /// Stationarity residual `|lambda - (-slope)|` at `b`.
    pub fn kkt_residual(&self, k: usize, b: f64, lambda: f64) -> f64 {
        (lambda + self.objective_slope(k, b)).abs()
    }
}

/// Smallest admissible pruning ratio, or infeasibility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PruningBound {
    Ratio(f64),
    /// Even a fully pruned global part misses the threshold.
    Infeasible,
}

impl PruningBound {
    pub fn ratio(self) -> Option<f64> {
        match self {
            PruningBound::Ratio(r) => Some(r),
            PruningBound::Infeasible => None,
        }
    }
}

/// `(1 - (T_th - T_per) / (T_cmp_g + T_com_g))^+`, capped at one.
pub fn pruning_ratio_lower_bound(
    t_th: f64,
    t_cmp_per: f64,
    t_cmp_g: f64,
    t_com_g: f64,
) -> PruningBound {
    let slack = t_th - t_cmp_per;
    if slack < 0.0 {
        return PruningBound::Infeasible;
    }
    let denom = t_cmp_g + t_com_g;
    debug_assert!(denom > 0.0);
    PruningBound::Ratio((1.0 - slack / denom).clamp(0.0, 1.0))
}

/// Closed-form fraction at multiplier `lambda`, clipped to `[0, 1]`.
pub fn bandwidth_from_lambda(lambda: f64, inst: &AllocationInstance, device: usize) -> Result<f64> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::NonPositiveMultiplier(lambda));
    }
    Ok(unclipped_fraction(lambda, inst.coeffs(device)).clamp(0.0, 1.0))
}

fn unclipped_fraction(lambda: f64, c: Coeffs) -> f64 {
    ((c.v1 * c.v3 / lambda).sqrt() - c.v3) / c.v2
}

/// Pruning ratio implied by fraction `b`.
pub fn pruning_ratio(b: f64, inst: &AllocationInstance, device: usize) -> PruningBound {
    if inst.slack(device) < 0.0 || b <= 0.0 {
        return PruningBound::Infeasible;
    }
    PruningBound::Ratio(inst.coeffs(device).ratio(b).clamp(0.0, 1.0))
}

/// Result of one round's allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundAllocation {
    pub fractions: Vec<f64>,
    pub pruning_ratios: Vec<f64>,
    pub lambda_star: f64,
    pub infeasible_devices: Vec<usize>,
}

/// Solves for the multiplier and fills fractions and ratios.
///
/// Devices whose personalized compute alone overruns the threshold are listed
/// as infeasible and get `b = 0`, `rho = 1`; so does a device with exactly
/// zero slack, except it is not listed because `rho = 1` meets the threshold.
pub fn solve_bandwidth(inst: &AllocationInstance) -> Result<RoundAllocation> {
    inst.validate()?;
    let k = inst.len();
    let active: Vec<usize> = (0..k).filter(|&i| inst.slack(i) > 0.0).collect();
    let infeasible_devices: Vec<usize> = (0..k).filter(|&i| inst.slack(i) < 0.0).collect();
    if active.is_empty() {
        return Err(Error::AllDevicesInfeasible);
    }

    let coeffs: Vec<Coeffs> = active.iter().map(|&i| inst.coeffs(i)).collect();
    let total = |lambda: f64| -> f64 {
        coeffs
            .iter()
            .map(|&c| unclipped_fraction(lambda, c).clamp(0.0, 1.0))
            .sum()
    };

    // Sum is nonincreasing in lambda: large at `lo`, small at `hi`.
    let (mut lo, mut hi) = (LAMBDA_MIN, LAMBDA_MAX);
    if total(lo) < 1.0 - SUM_TOLERANCE || total(hi) > 1.0 + SUM_TOLERANCE {
        return Err(Error::BracketNotFound);
    }
    let mut lambda = (lo * hi).sqrt();
    for _ in 0..MAX_BISECTION_STEPS {
        lambda = (lo * hi).sqrt();
        let s = total(lambda);
        if (s - 1.0).abs() <= SUM_TOLERANCE {
            break;
        }
        if s > 1.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
    }

    let mut fractions = vec![0.0; k];
    let mut pruning_ratios = vec![1.0; k];
    for (&i, &c) in active.iter().zip(&coeffs) {
        let b = unclipped_fraction(lambda, c).clamp(0.0, 1.0);
        fractions[i] = b;
        if b > 0.0 {
            pruning_ratios[i] = c.ratio(b).clamp(0.0, 1.0);
        }
    }
    Ok(RoundAllocation {
        fractions,
        pruning_ratios,
        lambda_star: lambda,
        infeasible_devices,
    })
}

/// Equal shares `1/K`, then the per-device lower bound on the ratio.
pub fn equal_share_allocation(inst: &AllocationInstance) -> Result<RoundAllocation> {
    inst.validate()?;
    let k = inst.len();
    let share = 1.0 / k as f64;
    let mut out = RoundAllocation {
        fractions: vec![share; k],
        pruning_ratios: vec![1.0; k],
        lambda_star: 0.0,
        infeasible_devices: Vec::new(),
    };
    for i in 0..k {
        let t_com = inst.payload_bits[i] / (share * inst.spectral_rate_hz_coeff[i]);
        match pruning_ratio_lower_bound(
            inst.latency_threshold_s,
            inst.t_cmp_per_s[i],
            inst.t_cmp_g_s[i],
            t_com,
        ) {
            PruningBound::Ratio(r) => out.pruning_ratios[i] = r,
            PruningBound::Infeasible => {
                out.fractions[i] = 0.0;
                out.infeasible_devices.push(i);
            }
        }
    }
    if out.infeasible_devices.len() == k {
        return Err(Error::AllDevicesInfeasible);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identical(k: usize) -> AllocationInstance {
        AllocationInstance {
            latency_threshold_s: 25e-3,
            t_cmp_per_s: vec![4e-3; k],
            t_cmp_g_s: vec![20e-3; k],
            payload_bits: vec![1.0e7; k],
            spectral_rate_hz_coeff: vec![2.0e8; k],
        }
    }

    #[test]
    fn lower_bound_hand_values() {
        assert_eq!(
            pruning_ratio_lower_bound(25e-3, 5e-3, 10e-3, 30e-3),
            PruningBound::Ratio(0.5)
        );
        assert_eq!(
            pruning_ratio_lower_bound(50e-3, 5e-3, 10e-3, 30e-3),
            PruningBound::Ratio(0.0)
        );
        assert_eq!(
            pruning_ratio_lower_bound(5e-3, 5e-3, 10e-3, 30e-3),
            PruningBound::Ratio(1.0)
        );
        assert_eq!(
            pruning_ratio_lower_bound(4e-3, 5e-3, 10e-3, 30e-3),
            PruningBound::Infeasible
        );
    }

    #[test]
    fn fraction_limits() {
        let inst = identical(3);
        assert_eq!(bandwidth_from_lambda(1e300, &inst, 0).unwrap(), 0.0);
        // sqrt(V1 V3 / lambda) = V3  <=>  lambda = V1 / V3.
        let c = inst.coeffs(0);
        let lambda = c.v1 / c.v3;
        assert!(bandwidth_from_lambda(lambda, &inst, 0).unwrap().abs() < 1e-15);
        assert!(matches!(
            bandwidth_from_lambda(0.0, &inst, 0),
            Err(Error::NonPositiveMultiplier(_))
        ));
        assert!(bandwidth_from_lambda(-1.0, &inst, 0).is_err());
    }

    #[test]
    fn identical_devices_share_equally() {
        for k in [1, 2, 5, 10] {
            let a = solve_bandwidth(&identical(k)).unwrap();
            for b in &a.fractions {
                assert!((b - 1.0 / k as f64).abs() < 1e-9, "k={k} b={b}");
            }
            assert!(a.infeasible_devices.is_empty());
        }
    }

    #[test]
    fn ratio_edge_cases() {
        let mut inst = identical(2);
        // Full band and generous threshold: the whole model fits.
        inst.latency_threshold_s = 1.0;
        assert_eq!(pruning_ratio(1.0, &inst, 0), PruningBound::Ratio(0.0));
        inst.latency_threshold_s = inst.t_cmp_per_s[0];
        assert_eq!(pruning_ratio(0.5, &inst, 0), PruningBound::Ratio(1.0));
        let inst = identical(2);
        assert_eq!(pruning_ratio(0.0, &inst, 0), PruningBound::Infeasible);
    }

    #[test]
    fn infeasible_devices_are_excluded() {
        let mut inst = identical(3);
        inst.t_cmp_per_s[1] = 30e-3;
        let a = solve_bandwidth(&inst).unwrap();
        assert_eq!(a.infeasible_devices, vec![1]);
        assert_eq!(a.fractions[1], 0.0);
        assert_eq!(a.pruning_ratios[1], 1.0);
        assert!((a.fractions[0] - 0.5).abs() < 1e-9);

        inst.t_cmp_per_s = vec![30e-3; 3];
        assert!(matches!(
            solve_bandwidth(&inst),
            Err(Error::AllDevicesInfeasible)
        ));
    }

    #[test]
    fn invalid_instances_are_rejected() {
        let mut inst = identical(2);
        inst.payload_bits.pop();
        assert!(matches!(
            solve_bandwidth(&inst),
            Err(Error::InvalidInstance(_))
        ));
        let mut inst = identical(2);
        inst.spectral_rate_hz_coeff[0] = 0.0;
        assert!(solve_bandwidth(&inst).is_err());
    }

    #[test]
    fn equal_share_matches_lower_bound() {
        let inst = identical(4);
        let a = equal_share_allocation(&inst).unwrap();
        let t_com = 1.0e7 / (0.25 * 2.0e8);
        let expect = pruning_ratio_lower_bound(25e-3, 4e-3, 20e-3, t_com)
            .ratio()
            .unwrap();
        for r in a.pruning_ratios {
            assert!((r - expect).abs() < 1e-15);
        }
    }
}
