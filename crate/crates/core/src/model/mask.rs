//! Importance scores, pruning masks and pruned-size accounting.

use serde::{Deserialize, Serialize};

use super::{check_len, PartitionedModel};
use crate::{Error, Result};

/// Binary keep-mask over the global parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruningMask {
    bits: Vec<bool>,
    ratio: f64,
}

impl PruningMask {
    pub fn all_ones(n: usize) -> Self {
        PruningMask {
            bits: vec![true; n],
            ratio: 0.0,
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        let zeros = bits.iter().filter(|b| !**b).count();
        let ratio = if bits.is_empty() {
            0.0
        } else {
            zeros as f64 / bits.len() as f64
        };
        PruningMask { bits, ratio }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// The requested pruning ratio.
    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn retained(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn pruned(&self) -> usize {
        self.len() - self.retained()
    }
}

/// `|u_probe - u_ref|` per coordinate.
pub fn importance_scores(u_probe: &[f64], u_ref: &[f64]) -> Result<Vec<f64>> {
    check_len("probe vector", u_ref.len(), u_probe.len())?;
    Ok(u_probe
        .iter()
        .zip(u_ref)
        .map(|(a, b)| (a - b).abs())
        .collect())
}

/// Number of coordinates pruned at ratio `rho`, rounded half up.
pub fn pruned_count(rho: f64, n: usize) -> usize {
    let c = (rho * n as f64 + 0.5).floor();
    (c.max(0.0) as usize).min(n)
}

/// Prunes the `pruned_count(rho, n)` lowest scores; among equal scores the
/// lower index goes first.
pub fn build_mask(scores: &[f64], rho: f64) -> PruningMask {
    debug_assert!((0.0..=1.0).contains(&rho), "pruning ratio {rho}");
    let rho = rho.clamp(0.0, 1.0);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut bits = vec![true; scores.len()];
    for &j in &order[..pruned_count(rho, scores.len())] {
        bits[j] = false;
    }
    PruningMask { bits, ratio: rho }
}

/// `u <- u * m`.
pub fn apply_mask(model: &mut PartitionedModel, mask: &PruningMask) -> Result<()> {
    check_len("mask", model.global_params.len(), mask.len())?;
    for (w, &keep) in model.global_params.iter_mut().zip(mask.bits()) {
        if !keep {
            *w = 0.0;
        }
    }
    Ok(())
}

/// `n_v + (1 - rho) n_u`, unrounded.
pub fn pruned_size(n_v: usize, n_u: usize, rho: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::RatioOutOfRange(rho));
    }
    Ok(n_v as f64 + (1.0 - rho) * n_u as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;

    #[test]
    fn mask_hand_example() {
        let m = build_mask(&[0.5, 0.1, 0.9, 0.3], 0.5);
        assert_eq!(m.bits(), &[true, false, true, false]);
        assert_eq!(build_mask(&[0.5, 0.1], 0.0).bits(), &[true, true]);
        assert_eq!(build_mask(&[0.5, 0.1], 1.0).bits(), &[false, false]);
    }

    #[test]
    fn ties_prune_lower_index_first() {
        let m = build_mask(&[0.2, 0.2, 0.2, 0.2], 0.5);
        assert_eq!(m.bits(), &[false, false, true, true]);
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(pruned_count(0.25, 2), 1);
        assert_eq!(pruned_count(0.3, 10), 3);
        assert_eq!(pruned_count(0.34, 10), 3);
        assert_eq!(pruned_count(0.35, 10), 4);
        assert_eq!(pruned_count(1.0, 7), 7);
        assert_eq!(pruned_count(0.0, 7), 0);
    }

    #[test]
    fn scores_match_naive_loop() {
        let a = [1.0, -2.0, 3.5, 0.0];
        let b = [1.5, -2.0, 1.0, -0.25];
        let s = importance_scores(&a, &b).unwrap();
        let mut naive = Vec::new();
        for i in 0..a.len() {
            let d = a[i] - b[i];
            naive.push(if d < 0.0 { -d } else { d });
        }
        assert_eq!(s, naive);
        assert_eq!(importance_scores(&a, &a).unwrap(), vec![0.0; 4]);
        let mut c = a;
        c[2] += 1.0;
        let s = importance_scores(&c, &a).unwrap();
        assert_eq!(s.iter().filter(|v| **v != 0.0).count(), 1);
        assert!(importance_scores(&a[..2], &b).is_err());
    }

    #[test]
    fn apply_mask_behaviour() {
        let mut model = crate::model::PartitionedModel::init(ModelSpec::mlp(3, 4, 2), 1).unwrap();
        let n = model.global_params.len();
        let orig = model.clone();
        apply_mask(&mut model, &PruningMask::all_ones(n)).unwrap();
        assert_eq!(model, orig);

        let scores: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64).collect();
        let mask = build_mask(&scores, 0.4);
        apply_mask(&mut model, &mask).unwrap();
        let once = model.clone();
        apply_mask(&mut model, &mask).unwrap();
        assert_eq!(model, once);

        // ||u*m - u||^2 equals the squared mass of the pruned coordinates.
        let err: f64 = once
            .global_params
            .iter()
            .zip(&orig.global_params)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let direct: f64 = orig
            .global_params
            .iter()
            .zip(mask.bits())
            .filter(|(_, keep)| !**keep)
            .map(|(w, _)| w * w)
            .sum();
        assert!((err - direct).abs() < 1e-15);
        for (w, keep) in once.global_params.iter().zip(mask.bits()) {
            assert_eq!(*w == 0.0 && !keep, !keep);
        }
        assert!(apply_mask(&mut model, &PruningMask::all_ones(n + 1)).is_err());
    }

    #[test]
    fn pruned_size_accounting() {
        assert_eq!(pruned_size(100, 200, 0.25).unwrap(), 250.0);
        assert_eq!(pruned_size(100, 200, 0.0).unwrap(), 300.0);
        assert_eq!(pruned_size(100, 200, 1.0).unwrap(), 100.0);
        assert!(pruned_size(1, 1, 2.0).is_err());
    }
}
