use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Constants of the convergence upper bound. All are user inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundParams {
    pub l_u: f64,
    pub l_v: f64,
    pub sigma_u: f64,
    pub sigma_v: f64,
    pub phi_u: f64,
    pub phi_v: f64,
    /// Pruning-error constant.
    pub d: f64,
    /// Fewest devices that retain any one global weight, over all rounds.
    pub kappa_star: f64,
    pub eta_u: f64,
    pub eta_v: f64,
    pub tau_u: f64,
    pub tau_v: f64,
    /// Global-part weight count.
    pub n: f64,
    pub k: f64,
    pub g: f64,
    /// Gradient-diversity constants; carried along, not used by the terms.
    pub delta: f64,
    pub varphi: f64,
}

impl BoundParams {
    /// Every constant set to one.
    pub fn unit() -> Self {
        BoundParams {
            l_u: 1.0,
            l_v: 1.0,
            sigma_u: 1.0,
            sigma_v: 1.0,
            phi_u: 1.0,
            phi_v: 1.0,
            d: 1.0,
            kappa_star: 1.0,
            eta_u: 1.0,
            eta_v: 1.0,
            tau_u: 1.0,
            tau_v: 1.0,
            n: 1.0,
            k: 1.0,
            g: 1.0,
            delta: 1.0,
            varphi: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("l_u", self.l_u),
            ("l_v", self.l_v),
            ("sigma_u", self.sigma_u),
            ("sigma_v", self.sigma_v),
            ("phi_u", self.phi_u),
            ("phi_v", self.phi_v),
            ("d", self.d),
            ("kappa_star", self.kappa_star),
            ("eta_u", self.eta_u),
            ("eta_v", self.eta_v),
            ("tau_u", self.tau_u),
            ("tau_v", self.tau_v),
            ("n", self.n),
            ("k", self.k),
            ("g", self.g),
            ("delta", self.delta),
            ("varphi", self.varphi),
        ];
        for (key, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(
                    key,
                    format!("must be positive and finite, got {v}"),
                ));
            }
        }
        if !(1.0..=self.k).contains(&self.kappa_star) {
            return Err(Error::config("kappa_star", "must lie in [1, k]"));
        }
        if self.g < 1.0 {
            return Err(Error::config("g", "must be at least 1"));
        }
        Ok(())
    }
}

/// Pruning-independent term.
pub fn bound_a1(p: &BoundParams) -> f64 {
    let v_drift = p.eta_v.powi(2) * p.tau_v.powi(2) * p.sigma_v.powi(2) * p.l_v / 2.0;
    let v_local = 4.0
        * p.eta_v.powi(3)
        * p.l_v.powi(2)
        * p.sigma_v.powi(2)
        * p.tau_v.powi(2)
        * (p.tau_v - 1.0);
    let u_drift =
        3.0 * p.eta_u.powi(2) * p.n.powi(2) * p.tau_u.powi(2) * p.phi_u.powi(2) * p.l_u / 2.0;
    let shared = p.n * p.phi_u.powi(2) * p.k * p.eta_u.powi(3) * p.l_u.powi(2) * p.tau_u.powi(3)
        + 3.0 * p.n.powi(2) * p.eta_u.powi(2) * p.tau_u.powi(2) * p.k * p.sigma_u.powi(2) * p.l_u
        + 3.0
            * p.n.powi(2)
            * p.l_u.powi(3)
            * p.tau_u.powi(4)
            * p.eta_u.powi(4)
            * p.k
            * p.phi_u.powi(2);
    v_drift + v_local + u_drift + shared / (2.0 * p.kappa_star)
}

/// Coefficient of the summed pruning ratios.
pub fn bound_a2(p: &BoundParams) -> f64 {
    let num = p.n * p.eta_u * p.tau_u * p.l_u.powi(2) * p.d.powi(2)
        + 3.0 * p.n.powi(2) * p.eta_u.powi(2) * p.l_u.powi(3) * p.d.powi(2) * p.tau_u.powi(2);
    num / (p.g * p.kappa_star)
}

/// `f_gap / G + A1 + A2 * sum_g sum_k rho`, with `rho_schedule[g][k]`.
pub fn bound_rhs(p: &BoundParams, f_gap: f64, rho_schedule: &[Vec<f64>]) -> f64 {
    let total: f64 = rho_schedule.iter().flatten().sum();
    f_gap / p.g + bound_a1(p) + bound_a2(p) * total
}
