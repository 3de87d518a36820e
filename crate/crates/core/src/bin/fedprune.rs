use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fedprune::analysis::BoundParams;
use fedprune::cli;
use fedprune::config::{Mode, Overrides};

#[derive(Parser)]
#[command(
    name = "fedprune",
    version,
    about = "Federated learning with partial pruning over a modeled uplink"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; defaults apply to missing keys
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed; falls back to the config file, then FEDPRUNE_SEED, then 0
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    rounds: Option<usize>,
    /// proposed, equal_resource_pruning, personalization_only or pruning_only
    #[arg(long, global = true)]
    mode: Option<Mode>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write metrics and tables
    Run,
    /// Solve one allocation instance (JSON) and print the result
    Allocate { instance: PathBuf },
    /// Evaluate the convergence-bound terms
    Bound {
        /// JSON bound constants; all ones when omitted
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        f_gap: f64,
        /// JSON array of per-round arrays of pruning ratios
        #[arg(long)]
        rho_schedule: Option<PathBuf>,
    },
    /// Summarize a metrics stream into CSV tables
    Summarize { metrics: PathBuf },
    /// Write the configured synthetic dataset
    SynthData,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let c = cli.common;
    let overrides = Overrides {
        seed: c.seed,
        rounds: c.rounds,
        mode: c.mode,
    };
    match cli.command {
        Command::Run => {
            let cfg = cli::load_config(c.config.as_deref(), &overrides)?;
            let metrics = cli::run_to_dir(&cfg, &c.out)?;
            if let Some(last) = metrics.last() {
                println!(
                    "{} rounds, final loss {:.6}, accuracy {:.4}, written to {}",
                    metrics.len(),
                    last.global_loss,
                    last.test_accuracy,
                    c.out.display()
                );
            }
        }
        Command::Allocate { instance } => {
            let text = std::fs::read_to_string(&instance)?;
            let alloc = cli::allocate_json(&text, c.mode.unwrap_or(Mode::Proposed))?;
            println!("{}", serde_json::to_string_pretty(&alloc)?);
        }
        Command::Bound {
            params,
            f_gap,
            rho_schedule,
        } => {
            let p = match params {
                Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
                None => BoundParams::unit(),
            };
            let schedule: Option<Vec<Vec<f64>>> = match rho_schedule {
                Some(path) => Some(serde_json::from_str(&std::fs::read_to_string(path)?)?),
                None => None,
            };
            print!("{}", cli::bound_report(&p, f_gap, schedule.as_deref())?);
        }
        Command::Summarize { metrics } => {
            let s = cli::summarize_file(&metrics, Some(&c.out))?;
            for m in &s.modes {
                println!(
                    "{}: {} rounds, latency {:.3} ± {:.3} ms, {} weights sent",
                    m.mode,
                    m.rounds,
                    m.latency_mean_s * 1e3,
                    m.latency_std_s * 1e3,
                    m.communicated_total
                );
            }
        }
        Command::SynthData => {
            let cfg = cli::load_config(c.config.as_deref(), &overrides)?;
            cli::synth_to_dir(&cfg, &c.out)?;
            println!("wrote synthetic data to {}", c.out.display());
        }
    }
    Ok(())
}
