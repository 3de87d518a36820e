// Evaluates the convergence-bound terms for unit constants and for the
// pruning ratios a planned schedule would use.

use fedprune::analysis::{bound_a1, bound_a2, bound_rhs, BoundParams};
use fedprune::config::{ExperimentConfig, Mode};
use fedprune::fedsim::plan_schedule;
use fedprune::model::ModelSpec;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let unit = BoundParams::unit();
    println!(
        "unit constants: A1 = {}, A2 = {}",
        bound_a1(&unit),
        bound_a2(&unit)
    );

    let rounds = 10;
    let p = BoundParams {
        eta_u: 0.001,
        eta_v: 0.001,
        tau_u: 10.0,
        tau_v: 10.0,
        n: 1.0,
        k: 10.0,
        kappa_star: 2.0,
        g: rounds as f64,
        d: 0.5,
        ..unit
    };
    p.validate()?;
    for mode in [Mode::Proposed, Mode::EqualResourcePruning] {
        let cfg = ExperimentConfig {
            mode,
            rounds,
            ..ExperimentConfig::default()
        };
        let plans = plan_schedule(&cfg, ModelSpec::mnist_cnn(10).sizes())?;
        let rho: Vec<Vec<f64>> = plans
            .iter()
            .map(|r| r.devices.iter().map(|d| d.pruning_ratio).collect())
            .collect();
        let total: f64 = rho.iter().flatten().sum();
        println!(
            "{mode}: sum of ratios {total:.6}, bound {:.8}",
            bound_rhs(&p, 1.0, &rho)
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
