use fedprune::config::{ExperimentConfig, Mode, UpdateSchedule};
use fedprune::data::{synth_blobs, LabeledDataset, MiniBatchSampler};
use fedprune::fedsim::{evaluate_devices, FederatedData, Simulation, LATENCY_TOLERANCE_S};
use fedprune::model::{LayerSpec, ModelSpec, Partition, PartitionedModel};
use fedprune::rng::{derive_seed, Stream};
use fedprune::{config::Evaluation, Error};

fn base() -> ExperimentConfig {
    ExperimentConfig {
        k_devices: 4,
        rounds: 3,
        tau_v: 3,
        tau_u: 4,
        batch_size: 8,
        synth_classes: 4,
        synth_per_class: 25,
        synth_dims: 5,
        mlp_hidden: 6,
        eta_u: 0.1,
        eta_v: 0.1,
        // Tight enough that the small MLP has to prune.
        latency_threshold_s: 1.5e-6,
        seed: Some(21),
        ..ExperimentConfig::default()
    }
}

fn sim(cfg: &ExperimentConfig) -> Simulation {
    Simulation::new(cfg.clone(), FederatedData::from_config(cfg).unwrap()).unwrap()
}

/// Plain SGD on one device, written out against the raw gradients.
fn sgd_oracle(
    cfg: &ExperimentConfig,
    data: &FederatedData,
    simultaneous: bool,
) -> PartitionedModel {
    let spec = cfg.model_spec(data.train.features(), data.train.class_count());
    let seed = cfg.seed();
    let u = PartitionedModel::init(spec.clone(), seed)
        .unwrap()
        .global_params;
    let v = PartitionedModel::init(spec.clone(), derive_seed(seed, Stream::Init, 1))
        .unwrap()
        .personalized_params;
    let mut model = PartitionedModel::from_parts(spec, v, u).unwrap();
    let shard = data.partition.device_indices[0].clone();
    let mut sampler = MiniBatchSampler::new(shard, cfg.batch_size, seed, 0);
    for _ in 0..cfg.rounds {
        if simultaneous {
            for _ in 0..cfg.tau_v.max(cfg.tau_u) {
                let idx = sampler.next_batch();
                let g = model.backward(&data.train.batch(&idx)).unwrap();
                for (w, d) in model
                    .personalized_params
                    .iter_mut()
                    .zip(&g.grad_personalized)
                {
                    *w -= cfg.eta_v * d;
                }
                for (w, d) in model.global_params.iter_mut().zip(&g.grad_global) {
                    *w -= cfg.eta_u * d;
                }
            }
            continue;
        }
        for _ in 0..cfg.tau_v {
            let idx = sampler.next_batch();
            let g = model.backward(&data.train.batch(&idx)).unwrap();
            for (w, d) in model
                .personalized_params
                .iter_mut()
                .zip(&g.grad_personalized)
            {
                *w -= cfg.eta_v * d;
            }
        }
        for _ in 0..cfg.tau_u {
            let idx = sampler.next_batch();
            let g = model.backward(&data.train.batch(&idx)).unwrap();
            for (w, d) in model.global_params.iter_mut().zip(&g.grad_global) {
                *w -= cfg.eta_u * d;
            }
        }
    }
    model
}

#[test]
fn single_device_without_pruning_is_sequential_sgd() {
    for schedule in [UpdateSchedule::Alternating, UpdateSchedule::Simultaneous] {
        let cfg = ExperimentConfig {
            k_devices: 1,
            labels_per_device: 4,
            mode: Mode::PersonalizationOnly,
            update_schedule: schedule,
            tau_u: if schedule == UpdateSchedule::Simultaneous {
                3
            } else {
                4
            },
            ..base()
        };
        let data = FederatedData::from_config(&cfg).unwrap();
        let oracle = sgd_oracle(&cfg, &data, schedule == UpdateSchedule::Simultaneous);
        let mut s = Simulation::new(cfg.clone(), data).unwrap();
        for _ in 0..cfg.rounds {
            s.run_round().unwrap();
        }
        assert_eq!(s.state.global, oracle.global_params, "{schedule:?}");
        assert_eq!(
            s.state.personalized[0], oracle.personalized_params,
            "{schedule:?}"
        );
    }
}

#[test]
fn fixed_zero_ratio_matches_personalization_only() {
    let cfg = ExperimentConfig {
        fixed_pruning_ratio: Some(0.0),
        ..base()
    };
    let plain = ExperimentConfig {
        mode: Mode::PersonalizationOnly,
        ..base()
    };
    let (mut a, mut b) = (sim(&cfg), sim(&plain));
    a.run_round().unwrap();
    b.run_round().unwrap();
    assert_eq!(a.state.global, b.state.global);
}

#[test]
fn zero_learning_rates_leave_the_model_unchanged() {
    for mode in Mode::ALL {
        let cfg = ExperimentConfig {
            eta_u: 0.0,
            eta_v: 0.0,
            mode,
            ..base()
        };
        let mut s = sim(&cfg);
        let (u0, v0) = (s.state.global.clone(), s.state.personalized.clone());
        let m = s.run_round().unwrap();
        assert_eq!(s.state.global, u0, "{mode}");
        assert_eq!(s.state.personalized, v0, "{mode}");
        if mode != Mode::PersonalizationOnly {
            assert!(
                m.per_device.iter().any(|d| d.pruning_ratio > 0.0),
                "{mode} did not prune"
            );
        }
    }
}

#[test]
fn personalization_only_sends_everything() {
    let cfg = ExperimentConfig {
        mode: Mode::PersonalizationOnly,
        ..base()
    };
    let mut s = sim(&cfg);
    let n_u = s.spec().sizes().global;
    for _ in 0..cfg.rounds {
        let m = s.run_round().unwrap();
        assert!(m
            .per_device
            .iter()
            .all(|d| d.pruning_ratio == 0.0 && !d.skipped));
        assert_eq!(m.communicated_weights, cfg.k_devices * n_u);
        // The budget is far too tight for an unpruned model; it is flagged.
        assert!(m.per_device.iter().all(|d| d.exceeds_threshold));
    }
}

#[test]
fn proposed_sends_less_and_meets_the_budget() {
    let cfg = base();
    let baseline = ExperimentConfig {
        mode: Mode::PersonalizationOnly,
        ..base()
    };
    let (mut ours, mut theirs) = (sim(&cfg), sim(&baseline));
    for _ in 0..cfg.rounds {
        let a = ours.run_round().unwrap();
        let b = theirs.run_round().unwrap();
        assert!(a.per_device.iter().any(|d| d.pruning_ratio > 0.0));
        assert!(a.communicated_weights < b.communicated_weights);
        assert!(a.communicated_weights <= cfg.k_devices * ours.spec().sizes().global);
        for d in a.per_device.iter().filter(|d| !d.skipped) {
            assert!(d.latency_s <= cfg.latency_threshold_s + LATENCY_TOLERANCE_S);
            assert!(!d.exceeds_threshold);
        }
        let max = a.per_device.iter().map(|d| d.latency_s).fold(0.0, f64::max);
        assert_eq!(a.round_latency_s, max);
    }
}

#[test]
fn round_metrics_follow_the_planner() {
    for mode in Mode::ALL {
        let cfg = ExperimentConfig { mode, ..base() };
        let mut s = sim(&cfg);
        for _ in 0..2 {
            let plan = s.plan_next().unwrap();
            let m = s.run_round().unwrap();
            assert_eq!(m.round_latency_s, plan.round_latency_s());
            assert_eq!(m.communicated_weights, plan.communicated_weights());
            for (d, p) in m.per_device.iter().zip(&plan.devices) {
                assert_eq!(
                    (d.bandwidth_fraction, d.pruning_ratio),
                    (p.bandwidth_fraction, p.pruning_ratio)
                );
            }
        }
    }
}

#[test]
fn pruning_only_has_no_personalized_part() {
    let cfg = ExperimentConfig {
        mode: Mode::PruningOnly,
        ..base()
    };
    let mut s = sim(&cfg);
    assert_eq!(s.spec().sizes().personalized, 0);
    let m = s.run_round().unwrap();
    assert!(m.global_loss.is_finite());
}

#[test]
fn all_devices_infeasible_aborts_the_round() {
    let cfg = ExperimentConfig {
        latency_threshold_s: 1e-9,
        ..base()
    };
    match sim(&cfg).run_round() {
        Err(Error::Round { round, source }) => {
            assert_eq!(round, 1);
            assert!(matches!(*source, Error::AllDevicesInfeasible));
        }
        other => panic!("expected an aborted round, got {other:?}"),
    }
}

#[test]
fn test_loss_is_the_mean_of_device_losses() {
    let mut s = sim(&base());
    s.run_round().unwrap();
    let (loss, _) = s.evaluate().unwrap();
    let data = s.data();
    let by_hand: Vec<f64> = (0..4)
        .filter(|&k| !data.test_indices[k].is_empty())
        .map(|k| {
            s.device_model(k)
                .unwrap()
                .forward_loss(&data.test.batch(&data.test_indices[k]))
                .unwrap()
        })
        .collect();
    let mean = by_hand.iter().sum::<f64>() / by_hand.len() as f64;
    assert!((loss - mean).abs() <= 1e-12);
}

#[test]
fn perfect_classifier_scores_one() {
    // Identity features, then a head that amplifies them.
    let spec = ModelSpec::new(vec![
        LayerSpec::dense(2, 2, Partition::Personalized),
        LayerSpec::relu(2, Partition::Personalized),
        LayerSpec::dense(2, 2, Partition::Global),
    ])
    .unwrap();
    let model = PartitionedModel::from_parts(
        spec,
        vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        vec![5.0, 0.0, 0.0, 5.0, 0.0, 0.0],
    )
    .unwrap();
    let test =
        LabeledDataset::new(2, vec![1.0, 0.0, 0.0, 1.0, 0.9, 0.1], vec![0, 1, 0], 2).unwrap();
    let models = vec![model.clone(), model];
    let idx = vec![vec![0, 1, 2], vec![1]];
    for ev in [Evaluation::DeviceAveraged, Evaluation::Pooled] {
        let (_, acc) = evaluate_devices(&models, &test, &idx, ev).unwrap();
        assert_eq!(acc, 1.0);
    }
}

#[test]
fn untrained_model_on_random_labels_is_at_chance() {
    use rand::{Rng, SeedableRng};
    let classes = 10;
    let n = 4000;
    let blobs = synth_blobs(5, 1, n, 8, 1.0);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let test = LabeledDataset::new(8, blobs.inputs().to_vec(), labels, classes).unwrap();
    let model = PartitionedModel::init(ModelSpec::mlp(8, 16, classes), 3).unwrap();
    let (_, acc) =
        evaluate_devices(&[model], &test, &[(0..n).collect()], Evaluation::Pooled).unwrap();
    let p = 1.0 / classes as f64;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    assert!((acc - p).abs() <= 3.0 * sigma, "accuracy {acc}");
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let cfg = base();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let mut s = sim(&cfg);
            (0..cfg.rounds)
                .map(|_| s.run_round().unwrap())
                .collect::<Vec<_>>()
        })
    };
    assert_eq!(run(1), run(4));
}
