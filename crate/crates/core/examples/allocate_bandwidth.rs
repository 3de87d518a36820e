// Splits the uplink band for one round of ten devices training the CNN
// preset and compares it with equal shares.

use fedprune::allocator::{equal_share_allocation, solve_bandwidth, AllocationInstance};
use fedprune::config::ExperimentConfig;
use fedprune::model::ModelSpec;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::default();
    let devices = cfg.devices();
    let channel = cfg.channel_model().sample(cfg.seed(), 1, cfg.k_devices);
    let sizes = ModelSpec::mnist_cnn(10).sizes();
    let inst = AllocationInstance::from_devices(
        cfg.latency_threshold_s,
        &devices,
        &channel,
        sizes,
        cfg.iterations(),
        cfg.q_bits,
    );

    let opt = solve_bandwidth(&inst)?;
    let equal = equal_share_allocation(&inst)?;
    println!("lambda* = {:.4e}", opt.lambda_star);
    println!("device  gain(dB)     b_opt   rho_opt  rho_equal");
    for k in 0..inst.len() {
        println!(
            "{k:>6}  {:>8.2}  {:.6}  {:.6}  {:.6}",
            10.0 * channel.gains_linear[k].log10(),
            opt.fractions[k],
            opt.pruning_ratios[k],
            equal.pruning_ratios[k]
        );
    }
    let sum = |v: &[f64]| v.iter().sum::<f64>();
    println!(
        "total pruning: optimized {:.6}, equal shares {:.6}",
        sum(&opt.pruning_ratios),
        sum(&equal.pruning_ratios)
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
