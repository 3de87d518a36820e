use rand_distr::{Distribution, Normal};

use super::LabeledDataset;
use crate::rng::{stream_rng, Stream};

/// Class means on the unit-spaced integer lattice `{0..m-1}^dims` (the first
/// `classes` points in mixed-radix order, `m` the smallest base with
/// `m^dims >= classes`), so distinct means are at least 1 apart. Samples add
/// isotropic Gaussian noise of standard deviation `cluster_std`; the whole
/// tensor is then min-max scaled into `[0, 1]`. Samples are grouped by class.
pub fn synth_blobs(
    seed: u64,
    classes: usize,
    per_class: usize,
    dims: usize,
    cluster_std: f64,
) -> LabeledDataset {
    assert!(
        classes >= 1 && per_class >= 1 && dims >= 1,
        "counts must be positive"
    );
    let mut base = 2usize;
    while (base as f64).powi(dims.min(64) as i32) < classes as f64 {
        base += 1;
    }
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|c| {
            let mut rest = c;
            (0..dims)
                .map(|_| {
                    let digit = rest % base;
                    rest /= base;
                    digit as f64
                })
                .collect()
        })
        .collect();

    let noise = Normal::new(0.0, cluster_std.max(0.0)).expect("finite std");
    let mut rng = stream_rng(seed, Stream::Data, 0);
    let mut inputs = Vec::with_capacity(classes * per_class * dims);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            inputs.extend(mean.iter().map(|&m| m + noise.sample(&mut rng)));
            labels.push(c);
        }
    }

    let lo = inputs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = inputs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    for x in &mut inputs {
        *x = (*x - lo) / span;
    }
    LabeledDataset::new(dims, inputs, labels, classes).expect("consistent shapes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_sized() {
        let a = synth_blobs(4, 3, 20, 5, 0.1);
        assert_eq!(a, synth_blobs(4, 3, 20, 5, 0.1));
        assert_ne!(a, synth_blobs(5, 3, 20, 5, 0.1));
        assert_eq!(a.len(), 60);
        assert!(a.inputs().iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn two_blobs_are_linearly_separable() {
        let ds = synth_blobs(1, 2, 200, 2, 0.1);
        // Means differ along the first axis; separate by that projection and
        // confirm with pairwise distances between the closest opposite pair.
        let proj = |i: usize| ds.sample(i)[0];
        let max0 = (0..200).map(proj).fold(f64::NEG_INFINITY, f64::max);
        let min1 = (200..400).map(proj).fold(f64::INFINITY, f64::min);
        assert!(min1 - max0 > 0.0, "margin {}", min1 - max0);
        let closest = (0..200)
            .flat_map(|i| (200..400).map(move |j| (i, j)))
            .map(|(i, j)| {
                let (a, b) = (ds.sample(i), ds.sample(j));
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        assert!(closest > 0.0);
    }
}
