// Streams metrics of two short runs into one JSON-lines buffer, reads it
// back and prints the per-mode summary table as CSV.

use fedprune::analysis::{read_metrics, summarize, write_table};
use fedprune::config::{ExperimentConfig, Mode};
use fedprune::fedsim::{run_experiment_with, write_metrics_line, FederatedData};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut stream = Vec::new();
    for mode in [Mode::Proposed, Mode::PersonalizationOnly] {
        let cfg = ExperimentConfig {
            mode,
            rounds: 5,
            k_devices: 4,
            synth_per_class: 30,
            batch_size: 16,
            eta_u: 0.05,
            eta_v: 0.05,
            latency_threshold_s: 5e-5,
            seed: Some(11),
            ..ExperimentConfig::default()
        };
        let data = FederatedData::from_config(&cfg)?;
        run_experiment_with(&cfg, data, |m| write_metrics_line(&mut stream, m))?;
    }

    let records = read_metrics(stream.as_slice())?;
    println!("{} records read", records.len());
    let summary = summarize(&records)?;
    write_table(std::io::stdout(), &summary.modes)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
