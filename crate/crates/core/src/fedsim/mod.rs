//! The federated round loop.
//!
//! Each round: draw channels, plan fractions and ratios, run every
//! participating device's local training (in parallel, one task per device),
//! average the masked uploads per coordinate, then evaluate.

mod plan;

pub use plan::{plan_round, plan_schedule, DevicePlan, RoundPlan, LATENCY_TOLERANCE_S};

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetKind, Evaluation, ExperimentConfig, Mode, UpdateSchedule};
use crate::data::{
    load_idx, partition_noniid, synth_blobs, DevicePartition, LabeledDataset, MiniBatchSampler,
};
use crate::model::{build_mask, importance_scores, ModelSpec, PartitionedModel, PruningMask};
use crate::rng::{derive_seed, Stream};
use crate::wireless::{ChannelModel, DeviceProfile};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub device: usize,
    pub bandwidth_fraction: f64,
    pub pruning_ratio: f64,
    pub latency_s: f64,
    pub skipped: bool,
    pub exceeds_threshold: bool,
}

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub mode: Mode,
    pub round: u64,
    /// Sample-weighted training loss over all devices.
    pub global_loss: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub round_latency_s: f64,
    pub communicated_weights: usize,
    pub per_device: Vec<DeviceRecord>,
}

/// A device's masked global part and its mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Upload {
    pub global: Vec<f64>,
    pub mask: PruningMask,
}

/// Per-coordinate mean over the devices that kept each coordinate. A
/// coordinate nobody kept keeps its previous value.
pub fn aggregate_global(uploads: &[Upload], previous: &[f64]) -> Result<Vec<f64>> {
    let n = previous.len();
    let mut sum = vec![0.0; n];
    let mut count = vec![0u32; n];
    for up in uploads {
        crate::model::check_len("uploaded global part", n, up.global.len())?;
        crate::model::check_len("uploaded mask", n, up.mask.len())?;
        for (j, (&w, &keep)) in up.global.iter().zip(up.mask.bits()).enumerate() {
            if keep {
                sum[j] += w;
                count[j] += 1;
            }
        }
    }
    Ok(sum
        .into_iter()
        .zip(count)
        .zip(previous)
        .map(|((s, c), &prev)| if c == 0 { prev } else { s / f64::from(c) })
        .collect())
}

/// Training and test data split across devices.
#[derive(Debug, Clone)]
pub struct FederatedData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub partition: DevicePartition,
    /// Test samples whose label the device holds.
    pub test_indices: Vec<Vec<usize>>,
}

impl FederatedData {
    pub fn new(
        train: LabeledDataset,
        test: LabeledDataset,
        k_devices: usize,
        labels_per_device: usize,
        seed: u64,
    ) -> Result<Self> {
        let partition = partition_noniid(&train, k_devices, labels_per_device, seed)?;
        let test_indices = (0..k_devices)
            .map(|k| {
                let labels = partition.label_set(k, &train);
                (0..test.len())
                    .filter(|&i| labels.binary_search(&test.labels()[i]).is_ok())
                    .collect()
            })
            .collect();
        Ok(FederatedData {
            train,
            test,
            partition,
            test_indices,
        })
    }

    /// Loads or generates the dataset named by `cfg`, splits and partitions it.
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let seed = cfg.seed();
        let full = match cfg.dataset {
            DatasetKind::Synthetic => synth_blobs(
                seed,
                cfg.synth_classes,
                cfg.synth_per_class,
                cfg.synth_dims,
                cfg.synth_cluster_std,
            ),
            DatasetKind::Idx => {
                let images = cfg
                    .idx_images
                    .as_deref()
                    .ok_or_else(|| Error::config("idx_images", "missing"))?;
                let labels = cfg
                    .idx_labels
                    .as_deref()
                    .ok_or_else(|| Error::config("idx_labels", "missing"))?;
                load_idx(images, labels)?
            }
        };
        let (train, test) = full.train_test_split(cfg.test_fraction, seed);
        FederatedData::new(train, test, cfg.k_devices, cfg.labels_per_device, seed)
    }
}

/// Server model, per-device personalized parts and samplers.
#[derive(Debug, Clone)]
pub struct SimState {
    /// Index of the last completed round.
    pub round: u64,
    pub global: Vec<f64>,
    pub personalized: Vec<Vec<f64>>,
    samplers: Vec<MiniBatchSampler>,
}

pub struct Simulation {
    cfg: ExperimentConfig,
    devices: Vec<DeviceProfile>,
    channel: ChannelModel,
    spec: ModelSpec,
    data: FederatedData,
    pub state: SimState,
}

impl Simulation {
    /// The server's global part comes from the base seed; each device's
    /// personalized part from a seed derived from its id.
    pub fn new(cfg: ExperimentConfig, data: FederatedData) -> Result<Self> {
        cfg.validate()?;
        if data.partition.devices() != cfg.k_devices {
            return Err(Error::config(
                "k_devices",
                format!("data is split over {} devices", data.partition.devices()),
            ));
        }
        let spec = cfg.model_spec(data.train.features(), data.train.class_count());
        let init = PartitionedModel::init(spec.clone(), cfg.seed())?;
        let personalized = (0..cfg.k_devices as u64)
            .map(|k| {
                let seed = derive_seed(cfg.seed(), Stream::Init, k + 1);
                PartitionedModel::init(spec.clone(), seed).map(|m| m.personalized_params)
            })
            .collect::<Result<Vec<_>>>()?;
        let samplers = data
            .partition
            .device_indices
            .iter()
            .enumerate()
            .map(|(k, idx)| {
                MiniBatchSampler::new(idx.clone(), cfg.batch_size, cfg.seed(), k as u64)
            })
            .collect();
        Ok(Simulation {
            devices: cfg.devices(),
            channel: cfg.channel_model(),
            state: SimState {
                round: 0,
                global: init.global_params,
                personalized,
                samplers,
            },
            spec,
            data,
            cfg,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn data(&self) -> &FederatedData {
        &self.data
    }

    /// Device `k`'s current model: server global part with its own `v_k`.
    pub fn device_model(&self, k: usize) -> Result<PartitionedModel> {
        PartitionedModel::from_parts(
            self.spec.clone(),
            self.state.personalized[k].clone(),
            self.state.global.clone(),
        )
    }

    /// Plans the next round without training.
    pub fn plan_next(&self) -> Result<RoundPlan> {
        let g = self.state.round + 1;
        let channel = self.channel.sample(self.cfg.seed(), g, self.devices.len());
        plan_round(&self.cfg, &self.devices, &channel, self.spec.sizes())
    }

    pub fn run_round(&mut self) -> Result<RoundMetrics> {
        let g = self.state.round + 1;
        self.step(g).map_err(|e| Error::Round {
            round: g,
            source: Box::new(e),
        })
    }

    fn step(&mut self, g: u64) -> Result<RoundMetrics> {
        let plan = self.plan_next()?;
        if plan.devices.iter().all(|d| d.skipped) {
            return Err(Error::AllDevicesInfeasible);
        }
        let (cfg, spec, data) = (&self.cfg, &self.spec, &self.data);
        let u_g = &self.state.global;
        let uploads: Vec<Option<Upload>> = self
            .state
            .personalized
            .par_iter_mut()
            .zip(self.state.samplers.par_iter_mut())
            .zip(plan.devices.par_iter())
            .map(|((v, sampler), dp)| {
                if dp.skipped {
                    Ok(None)
                } else {
                    local_update(cfg, spec, &data.train, u_g, v, sampler, dp).map(Some)
                }
            })
            .collect::<Result<_>>()?;
        let uploads: Vec<Upload> = uploads.into_iter().flatten().collect();
        self.state.global = aggregate_global(&uploads, &self.state.global)?;
        self.state.round = g;

        let global_loss = self.training_loss()?;
        let (test_loss, test_accuracy) = self.evaluate()?;
        Ok(RoundMetrics {
            mode: self.cfg.mode,
            round: g,
            global_loss,
            test_loss,
            test_accuracy,
            round_latency_s: plan.round_latency_s(),
            communicated_weights: plan.communicated_weights(),
            per_device: plan
                .devices
                .iter()
                .enumerate()
                .map(|(k, d)| DeviceRecord {
                    device: k,
                    bandwidth_fraction: d.bandwidth_fraction,
                    pruning_ratio: d.pruning_ratio,
                    latency_s: d.latency_s,
                    skipped: d.skipped,
                    exceeds_threshold: d.exceeds_threshold,
                })
                .collect(),
        })
    }

    /// `sum_k D_k / D * F_k(u, v_k)` over the training shards.
    pub fn training_loss(&self) -> Result<f64> {
        let shards = &self.data.partition.device_indices;
        let total: usize = shards.iter().map(Vec::len).sum();
        let losses = (0..shards.len())
            .into_par_iter()
            .map(|k| {
                if shards[k].is_empty() {
                    return Ok(0.0);
                }
                let w = shards[k].len() as f64 / total as f64;
                Ok(w * self
                    .device_model(k)?
                    .forward_loss(&self.data.train.batch(&shards[k]))?)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(losses.iter().sum())
    }

    /// Test loss and accuracy, see [`evaluate_devices`].
    pub fn evaluate(&self) -> Result<(f64, f64)> {
        let models = (0..self.cfg.k_devices)
            .map(|k| self.device_model(k))
            .collect::<Result<Vec<_>>>()?;
        evaluate_devices(
            &models,
            &self.data.test,
            &self.data.test_indices,
            self.cfg.evaluation,
        )
    }
}

/// Evaluates device `k`'s model on `test_indices[k]`. The loss is the mean of
/// per-device mean losses; accuracy is either the unweighted device mean or
/// pooled over all evaluated samples. Devices without test samples are left out.
pub fn evaluate_devices(
    models: &[PartitionedModel],
    test: &LabeledDataset,
    test_indices: &[Vec<usize>],
    evaluation: Evaluation,
) -> Result<(f64, f64)> {
    let per_device = models
        .par_iter()
        .zip(test_indices.par_iter())
        .filter(|(_, idx)| !idx.is_empty())
        .map(|(m, idx)| {
            let loss = m.forward_loss(&test.batch(idx))?;
            let correct = idx
                .iter()
                .filter(|&&i| m.predict(test.sample(i)) == test.labels()[i])
                .count();
            Ok((loss, correct, idx.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    if per_device.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = per_device.len() as f64;
    let loss = per_device.iter().map(|p| p.0).sum::<f64>() / n;
    let accuracy = match evaluation {
        Evaluation::DeviceAveraged => {
            per_device
                .iter()
                .map(|p| p.1 as f64 / p.2 as f64)
                .sum::<f64>()
                / n
        }
        Evaluation::Pooled => {
            let correct: usize = per_device.iter().map(|p| p.1).sum();
            let total: usize = per_device.iter().map(|p| p.2).sum();
            correct as f64 / total as f64
        }
    };
    Ok((loss, accuracy))
}

/// One device's round: local steps in the configured order, probe, mask,
/// re-initialization from the server model, masked global steps.
fn local_update(
    cfg: &ExperimentConfig,
    spec: &ModelSpec,
    train: &LabeledDataset,
    u_g: &[f64],
    v: &mut Vec<f64>,
    sampler: &mut MiniBatchSampler,
    dp: &DevicePlan,
) -> Result<Upload> {
    let mut model = PartitionedModel::from_parts(spec.clone(), std::mem::take(v), u_g.to_vec())?;
    let has_personal = !model.personalized_params.is_empty();
    let mask = match cfg.update_schedule {
        UpdateSchedule::Alternating => {
            if has_personal {
                for _ in 0..cfg.tau_v {
                    let idx = sampler.next_batch();
                    model.personalized_step(&train.batch(&idx), cfg.eta_v)?;
                }
            }
            let mask = prune(cfg, &mut model, train, u_g, sampler, dp)?;
            for _ in 0..cfg.tau_u {
                let idx = sampler.next_batch();
                model.global_step_masked(&train.batch(&idx), cfg.eta_u, &mask)?;
            }
            mask
        }
        UpdateSchedule::Simultaneous => {
            let mask = prune(cfg, &mut model, train, u_g, sampler, dp)?;
            let tau_v = if has_personal { cfg.tau_v } else { 0 };
            for t in 0..tau_v.max(cfg.tau_u) {
                let idx = sampler.next_batch();
                let batch = train.batch(&idx);
                match (t < tau_v, t < cfg.tau_u) {
                    (true, true) => model.joint_step(&batch, cfg.eta_v, cfg.eta_u, &mask)?,
                    (true, false) => model.personalized_step(&batch, cfg.eta_v)?,
                    _ => model.global_step_masked(&batch, cfg.eta_u, &mask)?,
                }
            }
            mask
        }
    };
    *v = std::mem::take(&mut model.personalized_params);
    Ok(Upload {
        global: model.global_params,
        mask,
    })
}

/// Probe steps on the unpruned global part, mask from `|u_probe - u_g|`, then
/// the global part restarts from `u_g * m`.
fn prune(
    cfg: &ExperimentConfig,
    model: &mut PartitionedModel,
    train: &LabeledDataset,
    u_g: &[f64],
    sampler: &mut MiniBatchSampler,
    dp: &DevicePlan,
) -> Result<PruningMask> {
    let mask = if dp.probe {
        for _ in 0..cfg.tau_u_probe {
            let idx = sampler.next_batch();
            model.global_step(&train.batch(&idx), cfg.eta_u)?;
        }
        build_mask(
            &importance_scores(&model.global_params, u_g)?,
            dp.pruning_ratio,
        )
    } else {
        PruningMask::all_ones(u_g.len())
    };
    for ((w, &u), &keep) in model.global_params.iter_mut().zip(u_g).zip(mask.bits()) {
        *w = if keep { u } else { 0.0 };
    }
    Ok(mask)
}

/// Runs `cfg.rounds` rounds, handing each record to `sink` as soon as it is
/// produced.
pub fn run_experiment_with<F>(
    cfg: &ExperimentConfig,
    data: FederatedData,
    mut sink: F,
) -> Result<Vec<RoundMetrics>>
where
    F: FnMut(&RoundMetrics) -> Result<()>,
{
    let mut sim = Simulation::new(cfg.clone(), data)?;
    let mut out = Vec::with_capacity(cfg.rounds);
    for _ in 0..cfg.rounds {
        let m = sim.run_round()?;
        sink(&m)?;
        out.push(m);
    }
    Ok(out)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RoundMetrics>> {
    run_experiment_with(cfg, FederatedData::from_config(cfg)?, |_| Ok(()))
}

/// Writes one JSON object per line and flushes after each.
pub fn write_metrics_line<W: Write>(out: &mut W, m: &RoundMetrics) -> Result<()> {
    serde_json::to_writer(&mut *out, m)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregation_averages_retaining_devices() {
        let prev = vec![9.0, 9.0];
        let ups = [
            Upload {
                global: vec![2.0, 0.0],
                mask: PruningMask::from_bits(vec![true, false]),
            },
            Upload {
                global: vec![0.0, 0.0],
                mask: PruningMask::from_bits(vec![false, false]),
            },
            Upload {
                global: vec![4.0, 0.0],
                mask: PruningMask::from_bits(vec![true, false]),
            },
        ];
        assert_eq!(aggregate_global(&ups, &prev).unwrap(), vec![3.0, 9.0]);
        let short = [Upload {
            global: vec![1.0],
            mask: PruningMask::all_ones(1),
        }];
        assert!(aggregate_global(&short, &prev).is_err());
    }

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            k_devices: 4,
            rounds: 2,
            tau_v: 2,
            tau_u: 2,
            batch_size: 8,
            synth_classes: 4,
            synth_per_class: 20,
            synth_dims: 4,
            mlp_hidden: 6,
            eta_u: 0.05,
            eta_v: 0.05,
            seed: Some(11),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn zero_rounds_is_empty_and_runs_are_repeatable() {
        let cfg = ExperimentConfig {
            rounds: 0,
            ..small_cfg()
        };
        assert!(run_experiment(&cfg).unwrap().is_empty());
        let a = run_experiment(&small_cfg()).unwrap();
        assert_eq!(a, run_experiment(&small_cfg()).unwrap());
        assert_eq!(a.len(), 2);
        assert_eq!(a[1].round, 2);
    }

    #[test]
    fn simultaneous_schedule_runs() {
        let cfg = ExperimentConfig {
            update_schedule: UpdateSchedule::Simultaneous,
            ..small_cfg()
        };
        let m = run_experiment(&cfg).unwrap();
        assert!(m.iter().all(|r| r.global_loss.is_finite()));
    }
}
