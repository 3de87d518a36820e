//! Labeled datasets, IDX ingestion, synthetic blobs, non-IID partitioning and
//! mini-batch sampling.

mod idx;
mod partition;
mod synth;

pub use idx::{load_idx, write_idx};
pub use partition::{partition_noniid, DevicePartition};
pub use synth::synth_blobs;

use std::io::Write;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::model::MiniBatch;
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

/// Row-major `samples x features` inputs in `[0, 1]` with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabeledDataset {
    pub fn new(
        features: usize,
        inputs: Vec<f64>,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if features == 0 || inputs.len() != features * labels.len() {
            return Err(Error::DimensionMismatch {
                what: "inputs vs labels x features",
                expected: features * labels.len(),
                actual: inputs.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::DimensionMismatch {
                what: "label exceeds class count",
                expected: class_count,
                actual: bad,
            });
        }
        Ok(LabeledDataset {
            features,
            inputs,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.features..(i + 1) * self.features]
    }

    pub fn batch(&self, indices: &[usize]) -> MiniBatch<'_> {
        MiniBatch::new(
            indices.iter().map(|&i| self.sample(i)).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features,
            inputs: indices
                .iter()
                .flat_map(|&i| self.sample(i).iter().copied())
                .collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    /// Shuffled split; the second set holds `round(test_fraction * len)`
    /// samples.
    pub fn train_test_split(
        &self,
        test_fraction: f64,
        seed: u64,
    ) -> (LabeledDataset, LabeledDataset) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut stream_rng(seed, Stream::Data, 1));
        let n_test =
            ((test_fraction.clamp(0.0, 1.0) * self.len() as f64).round() as usize).min(self.len());
        let (test, train) = order.split_at(n_test);
        (self.subset(train), self.subset(test))
    }

    /// CSV with a header row `f0,...,f{d-1},label`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.features).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.sample(i).iter().map(f64::to_string).collect();
            row.push(self.labels[i].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws batches without replacement within an epoch over one device's
/// indices, reshuffling when the epoch cannot fill another batch.
#[derive(Debug, Clone)]
pub struct MiniBatchSampler {
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl MiniBatchSampler {
    pub fn new(indices: Vec<usize>, batch_size: usize, seed: u64, device: u64) -> Self {
        let mut s = MiniBatchSampler {
            order: indices,
            batch_size: batch_size.max(1),
            cursor: 0,
            rng: stream_rng(seed, Stream::Sampler, device),
        };
        s.order.shuffle(&mut s.rng);
        s
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        let take = self.batch_size.min(self.order.len());
        if self.cursor + take > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let out = self.order[self.cursor..self.cursor + take].to_vec();
        self.cursor += take;
        out
    }
}
