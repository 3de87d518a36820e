//! A small feed-forward network split into a personalized part and a global
//! part, with exact gradients of the mean cross-entropy.
//!
//! The personalized parameters `v` stay on a device. The global parameters
//! `u` are shared, pruned by a per-device mask and averaged by the server.
//! Both live in flat vectors; each parametric layer owns a contiguous block of
//! its partition's vector, in layer order.

mod checkpoint;
mod layers;
mod mask;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use mask::{apply_mask, build_mask, importance_scores, pruned_count, pruned_size, PruningMask};

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::rng::{stream_rng, Stream};
use crate::wireless::PartitionSizes;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// dims `[in, out]`
    Dense,
    /// dims `[in_ch, out_ch, kernel, height, width]`, stride 1, same padding
    Conv,
    /// dims `[channels, height, width, size]`, max over `size x size`
    Pool,
    /// dims `[len]`, ReLU
    Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Personalized,
    Global,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub dims: Vec<usize>,
    pub partition: Partition,
}

impl LayerSpec {
    pub fn dense(n_in: usize, n_out: usize, partition: Partition) -> Self {
        LayerSpec {
            kind: LayerKind::Dense,
            dims: vec![n_in, n_out],
            partition,
        }
    }

    pub fn conv(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        height: usize,
        width: usize,
        partition: Partition,
    ) -> Self {
        LayerSpec {
            kind: LayerKind::Conv,
            dims: vec![in_ch, out_ch, kernel, height, width],
            partition,
        }
    }

    pub fn pool(
        channels: usize,
        height: usize,
        width: usize,
        size: usize,
        partition: Partition,
    ) -> Self {
        LayerSpec {
            kind: LayerKind::Pool,
            dims: vec![channels, height, width, size],
            partition,
        }
    }

    pub fn relu(len: usize, partition: Partition) -> Self {
        LayerSpec {
            kind: LayerKind::Activation,
            dims: vec![len],
            partition,
        }
    }

    pub fn param_count(&self) -> usize {
        layers::param_count(self)
    }

    pub fn input_len(&self) -> usize {
        layers::input_len(self)
    }

    pub fn output_len(&self) -> usize {
        layers::output_len(self)
    }
}

/// Ordered layer list. The partition may change only once along the stack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelSpec {
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = ModelSpec { layers };
        spec.validate()?;
        Ok(spec)
    }

    /// `input -> hidden -> classes` with the hidden layer personalized and the
    /// classifier head global.
    pub fn mlp(input: usize, hidden: usize, classes: usize) -> Self {
        ModelSpec {
            layers: vec![
                LayerSpec::dense(input, hidden, Partition::Personalized),
                LayerSpec::relu(hidden, Partition::Personalized),
                LayerSpec::dense(hidden, classes, Partition::Global),
            ],
        }
    }

    /// 1x28x28 input; 5x5 convolutions to 32@28x28 and 64@14x14 with 2x2 max
    /// pooling form the personalized feature extractor, and the fully
    /// connected 3136 -> 128 -> `classes` head is global.
    pub fn mnist_cnn(classes: usize) -> Self {
        use Partition::{Global, Personalized};
        ModelSpec {
            layers: vec![
                LayerSpec::conv(1, 32, 5, 28, 28, Personalized),
                LayerSpec::relu(32 * 28 * 28, Personalized),
                LayerSpec::pool(32, 28, 28, 2, Personalized),
                LayerSpec::conv(32, 64, 5, 14, 14, Personalized),
                LayerSpec::relu(64 * 14 * 14, Personalized),
                LayerSpec::pool(64, 14, 14, 2, Personalized),
                LayerSpec::dense(3136, 128, Global),
                LayerSpec::relu(128, Global),
                LayerSpec::dense(128, classes, Global),
            ],
        }
    }

    /// Same layers with every parameter in the global part.
    pub fn all_global(&self) -> Self {
        ModelSpec {
            layers: self
                .layers
                .iter()
                .map(|l| LayerSpec {
                    partition: Partition::Global,
                    ..l.clone()
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidModel("no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            let want = match l.kind {
                LayerKind::Dense => 2,
                LayerKind::Conv => 5,
                LayerKind::Pool => 4,
                LayerKind::Activation => 1,
            };
            if l.dims.len() != want || l.dims.contains(&0) {
                return Err(Error::InvalidModel(format!(
                    "layer {i} ({:?}) needs {want} positive dims, got {:?}",
                    l.kind, l.dims
                )));
            }
            if l.kind == LayerKind::Conv && l.dims[2] % 2 == 0 {
                return Err(Error::InvalidModel(format!(
                    "layer {i}: same-padding convolution needs an odd kernel"
                )));
            }
            if l.kind == LayerKind::Pool
                && (l.dims[1] % l.dims[3] != 0 || l.dims[2] % l.dims[3] != 0)
            {
                return Err(Error::InvalidModel(format!(
                    "layer {i}: pool size must divide the spatial dims"
                )));
            }
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].output_len() != pair[1].input_len() {
                return Err(Error::InvalidModel(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    i,
                    pair[0].output_len(),
                    i + 1,
                    pair[1].input_len()
                )));
            }
        }
        let switches = self
            .layers
            .iter()
            .filter(|l| l.param_count() > 0)
            .map(|l| l.partition)
            .collect::<Vec<_>>()
            .windows(2)
            .filter(|w| w[0] != w[1])
            .count();
        if switches > 1 {
            return Err(Error::InvalidModel(
                "the personalized/global split must fall on a single layer boundary".into(),
            ));
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].input_len()
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(0, LayerSpec::output_len)
    }

    pub fn sizes(&self) -> PartitionSizes {
        let mut s = PartitionSizes {
            personalized: 0,
            global: 0,
        };
        for l in &self.layers {
            match l.partition {
                Partition::Personalized => s.personalized += l.param_count(),
                Partition::Global => s.global += l.param_count(),
            }
        }
        s
    }

    /// `(partition, offset)` of each layer's parameter block.
    fn offsets(&self) -> Vec<(Partition, usize)> {
        let (mut pv, mut pu) = (0, 0);
        self.layers
            .iter()
            .map(|l| {
                let slot = match l.partition {
                    Partition::Personalized => &mut pv,
                    Partition::Global => &mut pu,
                };
                let at = *slot;
                *slot += l.param_count();
                (l.partition, at)
            })
            .collect()
    }
}

/// Borrowed mini-batch: one input slice and one label per sample.
#[derive(Debug, Clone)]
pub struct MiniBatch<'a> {
    pub inputs: Vec<&'a [f64]>,
    pub labels: Vec<usize>,
}

impl<'a> MiniBatch<'a> {
    pub fn new(inputs: Vec<&'a [f64]>, labels: Vec<usize>) -> Self {
        MiniBatch { inputs, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    pub grad_personalized: Vec<f64>,
    pub grad_global: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionedModel {
    pub spec: ModelSpec,
    pub personalized_params: Vec<f64>,
    pub global_params: Vec<f64>,
}

/// Per-sample activations kept for the backward pass.
struct Trace {
    acts: Vec<Vec<f64>>,
    argmax: Vec<Vec<usize>>,
}

impl PartitionedModel {
    /// Glorot-uniform weights, zero biases.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let sizes = spec.sizes();
        let mut model = PartitionedModel {
            personalized_params: vec![0.0; sizes.personalized],
            global_params: vec![0.0; sizes.global],
            spec,
        };
        let mut rng = stream_rng(seed, Stream::Init, 0);
        let offsets = model.spec.offsets();
        for (l, (part, at)) in model.spec.layers.clone().iter().zip(offsets) {
            let n_w = layers::weight_count(l);
            if n_w == 0 {
                continue;
            }
            let (fan_in, fan_out) = layers::fans(l);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
            let block = match part {
                Partition::Personalized => &mut model.personalized_params[at..at + n_w],
                Partition::Global => &mut model.global_params[at..at + n_w],
            };
            fill(block, &dist, &mut rng);
        }
        Ok(model)
    }

    pub fn from_parts(spec: ModelSpec, personalized: Vec<f64>, global: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        let sizes = spec.sizes();
        check_len(
            "personalized parameters",
            sizes.personalized,
            personalized.len(),
        )?;
        check_len("global parameters", sizes.global, global.len())?;
        Ok(PartitionedModel {
            spec,
            personalized_params: personalized,
            global_params: global,
        })
    }

    pub fn sizes(&self) -> PartitionSizes {
        self.spec.sizes()
    }

    fn block(&self, part: Partition, at: usize, len: usize) -> &[f64] {
        match part {
            Partition::Personalized => &self.personalized_params[at..at + len],
            Partition::Global => &self.global_params[at..at + len],
        }
    }

    fn check_batch(&self, batch: &MiniBatch<'_>) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        check_len("batch labels", batch.inputs.len(), batch.labels.len())?;
        let n_in = self.spec.input_len();
        let classes = self.spec.output_len();
        for x in &batch.inputs {
            check_len("input features", n_in, x.len())?;
        }
        if let Some(&bad) = batch.labels.iter().find(|&&y| y >= classes) {
            return Err(Error::DimensionMismatch {
                what: "label exceeds class count",
                expected: classes,
                actual: bad,
            });
        }
        Ok(())
    }

    fn run(&self, x: &[f64], offsets: &[(Partition, usize)]) -> Trace {
        let mut acts = Vec::with_capacity(self.spec.layers.len() + 1);
        let mut argmax = Vec::with_capacity(self.spec.layers.len());
        acts.push(x.to_vec());
        for (l, &(part, at)) in self.spec.layers.iter().zip(offsets) {
            let params = self.block(part, at, l.param_count());
            let mut y = Vec::new();
            let mut am = Vec::new();
            layers::forward(l, params, acts.last().expect("input"), &mut y, &mut am);
            acts.push(y);
            argmax.push(am);
        }
        Trace { acts, argmax }
    }

    /// Logits for one sample.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let offsets = self.spec.offsets();
        self.run(x, &offsets).acts.pop().expect("output")
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    /// Cross-entropy of one sample.
    pub fn sample_loss(&self, x: &[f64], label: usize) -> f64 {
        let (loss, _) = softmax_xent(&self.logits(x), label);
        loss
    }

    /// Mean cross-entropy over the batch.
    pub fn forward_loss(&self, batch: &MiniBatch<'_>) -> Result<f64> {
        self.check_batch(batch)?;
        let total: f64 = batch
            .inputs
            .iter()
            .zip(&batch.labels)
            .map(|(x, &y)| self.sample_loss(x, y))
            .sum();
        Ok(total / batch.len() as f64)
    }

    /// Exact gradients of [`forward_loss`](Self::forward_loss).
    pub fn backward(&self, batch: &MiniBatch<'_>) -> Result<GradientPair> {
        Ok(self.loss_and_gradients(batch)?.1)
    }

    pub fn loss_and_gradients(&self, batch: &MiniBatch<'_>) -> Result<(f64, GradientPair)> {
        self.check_batch(batch)?;
        let sizes = self.sizes();
        let mut grads = GradientPair {
            grad_personalized: vec![0.0; sizes.personalized],
            grad_global: vec![0.0; sizes.global],
        };
        let offsets = self.spec.offsets();
        // Layers before the first parametric one need no input gradient.
        let first_param = self
            .spec
            .layers
            .iter()
            .position(|l| l.param_count() > 0)
            .unwrap_or(usize::MAX);
        let mut loss = 0.0;
        let mut dy = Vec::new();
        let mut dx = Vec::new();
        for (x, &label) in batch.inputs.iter().zip(&batch.labels) {
            let trace = self.run(x, &offsets);
            let (l, dlogits) = softmax_xent(trace.acts.last().expect("output"), label);
            loss += l;
            dy.clear();
            dy.extend(dlogits);
            for (i, layer) in self.spec.layers.iter().enumerate().rev() {
                let (part, at) = offsets[i];
                let n = layer.param_count();
                let params = self.block(part, at, n);
                let dparams = match part {
                    Partition::Personalized => &mut grads.grad_personalized[at..at + n],
                    Partition::Global => &mut grads.grad_global[at..at + n],
                };
                let want_dx = i > first_param;
                layers::backward(
                    layer,
                    params,
                    &trace.acts[i],
                    &trace.argmax[i],
                    &dy,
                    dparams,
                    want_dx.then_some(&mut dx),
                );
                if !want_dx {
                    break;
                }
                std::mem::swap(&mut dy, &mut dx);
            }
        }
        let scale = 1.0 / batch.len() as f64;
        grads
            .grad_personalized
            .iter_mut()
            .chain(grads.grad_global.iter_mut())
            .for_each(|g| *g *= scale);
        Ok((loss * scale, grads))
    }

    /// `v <- v - eta_v grad_v`; the global part is untouched.
    pub fn personalized_step(&mut self, batch: &MiniBatch<'_>, eta_v: f64) -> Result<()> {
        let g = self.backward(batch)?;
        axpy(&mut self.personalized_params, -eta_v, &g.grad_personalized);
        Ok(())
    }

    /// `u <- u - eta_u (grad_u * m)`; the personalized part is untouched.
    pub fn global_step_masked(
        &mut self,
        batch: &MiniBatch<'_>,
        eta_u: f64,
        mask: &PruningMask,
    ) -> Result<()> {
        check_len("mask", self.global_params.len(), mask.len())?;
        let g = self.backward(batch)?;
        masked_update(&mut self.global_params, eta_u, &g.grad_global, mask);
        Ok(())
    }

    /// Unmasked global step, used for the importance probe.
    pub fn global_step(&mut self, batch: &MiniBatch<'_>, eta_u: f64) -> Result<()> {
        let g = self.backward(batch)?;
        axpy(&mut self.global_params, -eta_u, &g.grad_global);
        Ok(())
    }

    /// Both parts updated from gradients taken at the same point.
    pub fn joint_step(
        &mut self,
        batch: &MiniBatch<'_>,
        eta_v: f64,
        eta_u: f64,
        mask: &PruningMask,
    ) -> Result<()> {
        check_len("mask", self.global_params.len(), mask.len())?;
        let g = self.backward(batch)?;
        axpy(&mut self.personalized_params, -eta_v, &g.grad_personalized);
        masked_update(&mut self.global_params, eta_u, &g.grad_global, mask);
        Ok(())
    }
}

fn fill<R: Rng>(block: &mut [f64], dist: &Uniform<f64>, rng: &mut R) {
    for w in block {
        *w = dist.sample(rng);
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn masked_update(u: &mut [f64], eta: f64, grad: &[f64], mask: &PruningMask) {
    for ((w, g), &keep) in u.iter_mut().zip(grad).zip(mask.bits()) {
        if keep {
            *w -= eta * g;
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        })
    }
}

/// Loss and logit gradient of softmax cross-entropy.
fn softmax_xent(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + max - logits[label];
    let mut grad: Vec<f64> = exps.into_iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (PartitionedModel, Vec<Vec<f64>>, Vec<usize>) {
        let model = PartitionedModel::init(ModelSpec::mlp(6, 5, 3), 11).unwrap();
        let xs: Vec<Vec<f64>> = (0..4)
            .map(|i| {
                (0..6)
                    .map(|j| ((i * 7 + j * 3) % 10) as f64 / 10.0)
                    .collect()
            })
            .collect();
        (model, xs, vec![0, 1, 2, 1])
    }

    fn batch<'a>(xs: &'a [Vec<f64>], ys: &[usize]) -> MiniBatch<'a> {
        MiniBatch::new(xs.iter().map(Vec::as_slice).collect(), ys.to_vec())
    }

    #[test]
    fn preset_sizes() {
        let s = ModelSpec::mlp(64, 32, 10).sizes();
        assert_eq!(s.personalized, 64 * 32 + 32);
        assert_eq!(s.global, 32 * 10 + 10);
        let s = ModelSpec::mnist_cnn(10).sizes();
        assert_eq!(s.personalized, 32 * 25 + 32 + 64 * 32 * 25 + 64);
        assert_eq!(s.global, 3136 * 128 + 128 + 128 * 10 + 10);
        ModelSpec::mnist_cnn(10).validate().unwrap();
        let all = ModelSpec::mnist_cnn(10).all_global().sizes();
        assert_eq!(all.personalized, 0);
        assert_eq!(all.global, s.personalized + s.global);
    }

    #[test]
    fn split_must_be_single_boundary() {
        let spec = ModelSpec {
            layers: vec![
                LayerSpec::dense(4, 4, Partition::Global),
                LayerSpec::dense(4, 4, Partition::Personalized),
                LayerSpec::dense(4, 2, Partition::Global),
            ],
        };
        assert!(matches!(spec.validate(), Err(Error::InvalidModel(_))));
        let bad = ModelSpec {
            layers: vec![
                LayerSpec::dense(4, 3, Partition::Personalized),
                LayerSpec::dense(4, 2, Partition::Global),
            ],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn loss_is_mean_of_sample_losses() {
        let (model, xs, ys) = toy();
        let b = batch(&xs, &ys);
        let mean = xs
            .iter()
            .zip(&ys)
            .map(|(x, &y)| model.sample_loss(x, y))
            .sum::<f64>()
            / 4.0;
        assert!((model.forward_loss(&b).unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn duplicated_batch_is_invariant() {
        let (model, xs, ys) = toy();
        let one = batch(&xs[..1], &ys[..1]);
        let two = MiniBatch::new(vec![&xs[0], &xs[0]], vec![ys[0], ys[0]]);
        assert!(
            (model.forward_loss(&one).unwrap() - model.forward_loss(&two).unwrap()).abs() < 1e-15
        );
        let g1 = model.backward(&one).unwrap();
        let g2 = model.backward(&two).unwrap();
        for (a, b) in g1.grad_global.iter().zip(&g2.grad_global) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in g1.grad_personalized.iter().zip(&g2.grad_personalized) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn errors_on_bad_batches() {
        let (model, xs, _) = toy();
        let empty = MiniBatch::new(vec![], vec![]);
        assert!(matches!(model.forward_loss(&empty), Err(Error::EmptyBatch)));
        let short = [0.0; 3];
        let b = MiniBatch::new(vec![&short], vec![0]);
        assert!(matches!(
            model.forward_loss(&b),
            Err(Error::DimensionMismatch { .. })
        ));
        let b = MiniBatch::new(vec![&xs[0]], vec![9]);
        assert!(model.backward(&b).is_err());
    }

    #[test]
    fn zero_network_has_zero_hidden_gradients() {
        let spec = ModelSpec::mlp(4, 3, 2);
        let s = spec.sizes();
        let model =
            PartitionedModel::from_parts(spec, vec![0.0; s.personalized], vec![0.0; s.global])
                .unwrap();
        let x = [0.0; 4];
        let g = model.backward(&MiniBatch::new(vec![&x], vec![1])).unwrap();
        assert!(g.grad_personalized.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn personalized_step_composition() {
        let (mut model, xs, ys) = toy();
        let b = batch(&xs, &ys);
        let g = model.backward(&b).unwrap();
        let before = model.clone();
        model.personalized_step(&b, 0.1).unwrap();
        assert_eq!(model.global_params, before.global_params);
        for ((new, old), g) in model
            .personalized_params
            .iter()
            .zip(&before.personalized_params)
            .zip(&g.grad_personalized)
        {
            assert!((new - (old - 0.1 * g)).abs() < 1e-12);
        }
        let mut frozen = before.clone();
        frozen.personalized_step(&b, 0.0).unwrap();
        assert_eq!(frozen, before);
    }

    #[test]
    fn masked_step_extremes() {
        let (model, xs, ys) = toy();
        let b = batch(&xs, &ys);
        let n = model.global_params.len();
        let mut plain = model.clone();
        plain.global_step(&b, 0.05).unwrap();
        let mut ones = model.clone();
        ones.global_step_masked(&b, 0.05, &PruningMask::all_ones(n))
            .unwrap();
        assert_eq!(plain, ones);
        let mut zeros = model.clone();
        zeros
            .global_step_masked(&b, 0.05, &build_mask(&vec![0.0; n], 1.0))
            .unwrap();
        assert_eq!(zeros, model);
        let short = PruningMask::all_ones(n - 1);
        assert!(zeros.clone().global_step_masked(&b, 0.05, &short).is_err());
    }

    #[test]
    fn conv_pool_gradients_match_finite_differences() {
        use Partition::{Global, Personalized};
        let spec = ModelSpec::new(vec![
            LayerSpec::conv(2, 3, 3, 4, 4, Personalized),
            LayerSpec::relu(3 * 16, Personalized),
            LayerSpec::pool(3, 4, 4, 2, Personalized),
            LayerSpec::dense(12, 3, Global),
        ])
        .unwrap();
        let model = PartitionedModel::init(spec, 5).unwrap();
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                (0..32)
                    .map(|j| (((i * 13 + j * 7) % 17) as f64 / 17.0) - 0.3)
                    .collect()
            })
            .collect();
        let ys = vec![0, 2, 1];
        let b = batch(&xs, &ys);
        let g = model.backward(&b).unwrap();
        let h = 1e-6;
        for (idx, &analytic) in g.grad_personalized.iter().enumerate() {
            let mut p = model.clone();
            p.personalized_params[idx] += h;
            let up = p.forward_loss(&b).unwrap();
            p.personalized_params[idx] -= 2.0 * h;
            let down = p.forward_loss(&b).unwrap();
            let numeric = (up - down) / (2.0 * h);
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            assert!(
                (analytic - numeric).abs() / denom < 1e-4,
                "coord {idx}: {analytic} vs {numeric}"
            );
        }
    }
}
