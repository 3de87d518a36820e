// Trains the MLP preset on synthetic non-IID data under a tight round budget,
// then checkpoints one device's model and reads it back.

use fedprune::config::ExperimentConfig;
use fedprune::fedsim::{FederatedData, Simulation};
use fedprune::model::{load_checkpoint, save_checkpoint};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig {
        rounds: 15,
        k_devices: 6,
        synth_per_class: 60,
        batch_size: 16,
        tau_v: 5,
        tau_u: 5,
        eta_u: 0.05,
        eta_v: 0.05,
        latency_threshold_s: 3e-5,
        seed: Some(3),
        ..ExperimentConfig::default()
    };
    let data = FederatedData::from_config(&cfg)?;
    let mut sim = Simulation::new(cfg.clone(), data)?;
    println!(
        "global part {} weights, personalized part {}",
        sim.spec().sizes().global,
        sim.spec().sizes().personalized
    );
    for _ in 0..cfg.rounds {
        let m = sim.run_round()?;
        let mean_rho =
            m.per_device.iter().map(|d| d.pruning_ratio).sum::<f64>() / m.per_device.len() as f64;
        println!(
            "round {:>2}: loss {:.4}  test acc {:.3}  mean rho {:.3}  latency {:.2} us",
            m.round,
            m.global_loss,
            m.test_accuracy,
            mean_rho,
            m.round_latency_s * 1e6
        );
    }

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("device0.ckpt");
    let model = sim.device_model(0)?;
    save_checkpoint(&model, std::fs::File::create(&path)?)?;
    let back = load_checkpoint(std::fs::File::open(&path)?)?;
    assert_eq!(back, model);
    println!(
        "checkpoint round trip ok ({} bytes)",
        std::fs::metadata(&path)?.len()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
