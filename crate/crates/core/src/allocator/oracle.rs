//! Projected-gradient reference solver, kept independent of the closed form.

use super::AllocationInstance;

/// Euclidean projection onto `{x >= 0, sum x = 1}` (sort-and-threshold).
pub fn project_onto_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        cumsum += x;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Minimizes `sum_k (1 - b_k R_k s_k / (b_k R_k g_k + P_k))` over the simplex,
/// where `s_k` is the slack, `g_k` the global compute time, `P_k` the payload.
///
/// Projected gradient descent. Trial steps are capped by the diminishing
/// schedule `c / (1 + t / iterations)`, where `1 / c` is the smallest
/// curvature any term reaches on `[0, 1]`, and halved until the projected step
/// satisfies the sufficient-decrease test. Curvature across devices can span
/// many orders of magnitude, so a single global step (one over the largest
/// curvature) would stall. Returns the best iterate seen.
pub fn oracle_allocation(inst: &AllocationInstance, iterations: usize) -> Vec<f64> {
    let k = inst.len();
    assert!(iterations >= 1, "oracle needs at least one iteration");
    if k == 0 {
        return Vec::new();
    }

    // Per device: (V1, V2, V3) = (s R, g R, P).
    let coef: Vec<(f64, f64, f64)> = (0..k)
        .map(|i| {
            let r = inst.spectral_rate_hz_coeff[i];
            let s = inst.latency_threshold_s - inst.t_cmp_per_s[i];
            (s * r, inst.t_cmp_g_s[i] * r, inst.payload_bits[i])
        })
        .collect();
    let value = |b: &[f64]| -> f64 {
        b.iter()
            .zip(&coef)
            .map(|(&x, &(v1, v2, v3))| 1.0 - x * v1 / (x * v2 + v3))
            .sum()
    };
    let gradient = |b: &[f64]| -> Vec<f64> {
        b.iter()
            .zip(&coef)
            .map(|(&x, &(v1, v2, v3))| {
                let d = x * v2 + v3;
                -v1 * v3 / (d * d)
            })
            .collect()
    };

    // Curvature 2 |V1| V2 V3 / (b V2 + V3)^3 is smallest at b = 1.
    let flattest = coef
        .iter()
        .map(|&(v1, v2, v3)| 2.0 * v1.abs() * v2 * v3 / (v2 + v3).powi(3))
        .fold(f64::INFINITY, f64::min)
        .max(f64::MIN_POSITIVE);
    let cap0 = 1.0 / flattest;

    let mut b = vec![1.0 / k as f64; k];
    let mut f = value(&b);
    let mut best = b.clone();
    let mut best_val = f;
    let mut step = cap0;
    for t in 0..iterations {
        let cap = cap0 / (1.0 + t as f64 / iterations as f64);
        step = (step * 2.0).min(cap);
        let g = gradient(&b);
        loop {
            let moved: Vec<f64> = b.iter().zip(&g).map(|(x, gi)| x - step * gi).collect();
            let next = project_onto_simplex(&moved);
            let (mut lin, mut sq) = (0.0, 0.0);
            for ((n, x), gi) in next.iter().zip(&b).zip(&g) {
                lin += gi * (n - x);
                sq += (n - x) * (n - x);
            }
            let f_next = value(&next);
            if f_next <= f + lin + sq / (2.0 * step) || step < 1e-300 {
                b = next;
                f = f_next;
                break;
            }
            step *= 0.5;
        }
        if f < best_val {
            best_val = f;
            best.clone_from(&b);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_lands_on_simplex() {
        let p = project_onto_simplex(&[0.5, 2.0, -1.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(p, vec![0.0, 1.0, 0.0]);
        let p = project_onto_simplex(&[0.2, 0.3, 0.5]);
        assert!(p
            .iter()
            .zip([0.2, 0.3, 0.5])
            .all(|(a, b)| (a - b).abs() < 1e-15));
        let p = project_onto_simplex(&[1.0, 1.0]);
        assert_eq!(p, vec![0.5, 0.5]);
    }

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
    fn symmetric_and_single_device() {
        let b = oracle_allocation(&identical(4), 1000);
        for x in b {
            assert!((x - 0.25).abs() < 1e-4);
        }
        assert_eq!(oracle_allocation(&identical(1), 10), vec![1.0]);
    }

    #[test]
    fn deterministic() {
        let mut inst = identical(3);
        inst.spectral_rate_hz_coeff = vec![1e8, 3e8, 9e8];
        assert_eq!(oracle_allocation(&inst, 500), oracle_allocation(&inst, 500));
    }
}
