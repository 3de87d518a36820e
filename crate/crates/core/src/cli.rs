//! The work behind each `fedprune` subcommand, kept out of the binary so the
//! examples and tests drive exactly the same code.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::allocator::{
    equal_share_allocation, solve_bandwidth, AllocationInstance, RoundAllocation,
};
use crate::analysis::{
    bound_a1, bound_a2, bound_rhs, read_metrics, summarize, write_table, BoundParams, Summary,
};
use crate::config::{parse_config, ExperimentConfig, Mode, Overrides};
use crate::data::{synth_blobs, write_idx};
use crate::fedsim::{run_experiment_with, write_metrics_line, FederatedData, RoundMetrics};
use crate::output::{write_atomic, AtomicFile};
use crate::Result;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const ROUNDS_FILE: &str = "rounds.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CONFIG_FILE: &str = "config.json";

/// File (or defaults), then flags, then the seed fallback chain.
pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => parse_config(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(overrides);
    cfg.resolve_seed()?;
    cfg.validate()?;
    Ok(cfg)
}

/// Runs an experiment and writes `config.json`, `metrics.jsonl`, `rounds.csv`
/// and `summary.csv` into `out`. Metrics are streamed line by line to a
/// temporary file that is renamed into place when the run completes.
pub fn run_to_dir(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<RoundMetrics>> {
    fs::create_dir_all(out)?;
    write_atomic(
        out.join(CONFIG_FILE),
        serde_json::to_string_pretty(cfg)?.as_bytes(),
    )?;
    let data = FederatedData::from_config(cfg)?;
    let mut sink = AtomicFile::create(out.join(METRICS_FILE))?;
    let metrics = run_experiment_with(cfg, data, |m| write_metrics_line(&mut sink, m))?;
    sink.commit()?;
    if !metrics.is_empty() {
        write_summary(&summarize(&metrics)?, out)?;
    }
    Ok(metrics)
}

fn write_summary(s: &Summary, out: &Path) -> Result<()> {
    let mut rounds = AtomicFile::create(out.join(ROUNDS_FILE))?;
    write_table(&mut rounds, &s.series)?;
    rounds.commit()?;
    let mut modes = AtomicFile::create(out.join(SUMMARY_FILE))?;
    write_table(&mut modes, &s.modes)?;
    modes.commit()
}

/// Solves a JSON [`AllocationInstance`]; the equal-resource mode uses equal
/// shares, every other mode the optimized allocation.
pub fn allocate_json(instance_json: &str, mode: Mode) -> Result<RoundAllocation> {
    let inst: AllocationInstance = serde_json::from_str(instance_json)?;
    match mode {
        Mode::EqualResourcePruning => equal_share_allocation(&inst),
        _ => solve_bandwidth(&inst),
    }
}

/// `A1=..`, `A2=..` and, with a schedule, `rhs=..`, one per line.
pub fn bound_report(
    p: &BoundParams,
    f_gap: f64,
    rho_schedule: Option<&[Vec<f64>]>,
) -> Result<String> {
    p.validate()?;
    let mut s = format!("A1={}\nA2={}\n", bound_a1(p), bound_a2(p));
    if let Some(rho) = rho_schedule {
        s.push_str(&format!("rhs={}\n", bound_rhs(p, f_gap, rho)));
    }
    Ok(s)
}

/// Reads a metrics stream; with `out`, also writes the two CSV tables.
pub fn summarize_file(metrics: &Path, out: Option<&Path>) -> Result<Summary> {
    let file = fs::File::open(metrics)?;
    let s = summarize(&read_metrics(std::io::BufReader::new(file))?)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_summary(&s, dir)?;
    }
    Ok(s)
}

/// Writes the configured synthetic dataset as `synth.csv` and as an IDX pair
/// with one-row images.
pub fn synth_to_dir(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let ds = synth_blobs(
        cfg.seed(),
        cfg.synth_classes,
        cfg.synth_per_class,
        cfg.synth_dims,
        cfg.synth_cluster_std,
    );
    let mut csv = AtomicFile::create(out.join("synth.csv"))?;
    ds.write_csv(&mut csv)?;
    csv.flush()?;
    csv.commit()?;
    write_idx(
        &ds,
        1,
        ds.features(),
        out.join("synth-images.idx3-ubyte"),
        out.join("synth-labels.idx1-ubyte"),
    )
}
