// Per-round latency and uplink volume of every mode over 20 planned rounds
// of the CNN preset, without training.

use fedprune::analysis::mean_std;
use fedprune::config::{ExperimentConfig, Mode, ModelPreset};
use fedprune::fedsim::plan_schedule;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    println!(
        "{:<24} {:>12} {:>10} {:>14} {:>10}",
        "mode", "latency ms", "std ms", "weights sent", "over T_th"
    );
    for mode in Mode::ALL {
        let cfg = ExperimentConfig {
            mode,
            rounds: 20,
            model: ModelPreset::MnistCnn,
            ..ExperimentConfig::default()
        };
        // Pruning-only treats the whole CNN as global.
        let plans = plan_schedule(&cfg, cfg.model_spec(28 * 28, 10).sizes())?;
        let lat: Vec<f64> = plans.iter().map(|p| p.round_latency_s()).collect();
        let (mean, std) = mean_std(&lat);
        let sent: usize = plans.iter().map(|p| p.communicated_weights()).sum();
        let over = plans
            .iter()
            .flat_map(|p| &p.devices)
            .filter(|d| d.exceeds_threshold)
            .count();
        println!(
            "{:<24} {:>12.3} {:>10.3} {:>14} {:>10}",
            mode,
            mean * 1e3,
            std * 1e3,
            sent,
            over
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
