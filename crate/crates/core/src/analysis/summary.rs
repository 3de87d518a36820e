use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::config::Mode;
use crate::fedsim::RoundMetrics;
use crate::{Error, Result};

/// Latency, cost and final-round figures of one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: Mode,
    pub rounds: usize,
    pub latency_mean_s: f64,
    /// Sample standard deviation; zero for a single round.
    pub latency_std_s: f64,
    pub communicated_total: u64,
    pub threshold_violations: usize,
    pub final_global_loss: f64,
    pub final_test_accuracy: f64,
}

/// One round of one mode, for loss, accuracy and cost curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub mode: Mode,
    pub round: u64,
    pub global_loss: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub round_latency_s: f64,
    pub communicated_weights: usize,
    pub mean_pruning_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub modes: Vec<ModeSummary>,
    pub series: Vec<SeriesRow>,
}

/// Parses a JSON-lines metrics stream. Blank lines are ignored; any other
/// line that is not a record fails with its 1-based line number.
pub fn read_metrics<R: BufRead>(input: R) -> Result<Vec<RoundMetrics>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn summarize(records: &[RoundMetrics]) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::MalformedRecord {
            line: 0,
            reason: "empty metrics stream".into(),
        });
    }
    let mut by_mode: BTreeMap<Mode, Vec<&RoundMetrics>> = BTreeMap::new();
    for r in records {
        by_mode.entry(r.mode).or_default().push(r);
    }
    let modes = by_mode
        .into_iter()
        .map(|(mode, rs)| {
            let lat: Vec<f64> = rs.iter().map(|r| r.round_latency_s).collect();
            let (latency_mean_s, latency_std_s) = mean_std(&lat);
            let last = rs.last().expect("nonempty group");
            ModeSummary {
                mode,
                rounds: rs.len(),
                latency_mean_s,
                latency_std_s,
                communicated_total: rs.iter().map(|r| r.communicated_weights as u64).sum(),
                threshold_violations: rs
                    .iter()
                    .flat_map(|r| &r.per_device)
                    .filter(|d| d.exceeds_threshold)
                    .count(),
                final_global_loss: last.global_loss,
                final_test_accuracy: last.test_accuracy,
            }
        })
        .collect();
    let series = records
        .iter()
        .map(|r| {
            let active: Vec<f64> = r
                .per_device
                .iter()
                .filter(|d| !d.skipped)
                .map(|d| d.pruning_ratio)
                .collect();
            SeriesRow {
                mode: r.mode,
                round: r.round,
                global_loss: r.global_loss,
                test_loss: r.test_loss,
                test_accuracy: r.test_accuracy,
                round_latency_s: r.round_latency_s,
                communicated_weights: r.communicated_weights,
                mean_pruning_ratio: if active.is_empty() {
                    0.0
                } else {
                    active.iter().sum::<f64>() / active.len() as f64
                },
            }
        })
        .collect();
    Ok(Summary { modes, series })
}

/// Mean and sample (n - 1) standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// CSV with a header row, one row per item.
pub fn write_table<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fedsim::DeviceRecord;

    fn rec(mode: Mode, round: u64, latency: f64, comm: usize) -> RoundMetrics {
        RoundMetrics {
            mode,
            round,
            global_loss: 1.0 / round as f64,
            test_loss: 2.0,
            test_accuracy: 0.5,
            round_latency_s: latency,
            communicated_weights: comm,
            per_device: vec![DeviceRecord {
                device: 0,
                bandwidth_fraction: 1.0,
                pruning_ratio: 0.25,
                latency_s: latency,
                skipped: false,
                exceeds_threshold: latency > 0.025,
            }],
        }
    }

    #[test]
    fn single_round_passes_through() {
        let s = summarize(&[rec(Mode::Proposed, 1, 0.02, 7)]).unwrap();
        assert_eq!(s.modes.len(), 1);
        let m = &s.modes[0];
        assert_eq!(
            (m.latency_mean_s, m.latency_std_s, m.communicated_total),
            (0.02, 0.0, 7)
        );
        assert_eq!(s.series[0].mean_pruning_ratio, 0.25);
    }

    #[test]
    fn groups_by_mode_and_sums_cost() {
        let rs = vec![
            rec(Mode::PersonalizationOnly, 1, 0.05, 10),
            rec(Mode::PersonalizationOnly, 2, 0.06, 10),
            rec(Mode::Proposed, 1, 0.025, 4),
        ];
        let s = summarize(&rs).unwrap();
        let base = s
            .modes
            .iter()
            .find(|m| m.mode == Mode::PersonalizationOnly)
            .unwrap();
        assert_eq!(base.communicated_total, 20);
        assert_eq!(base.threshold_violations, 2);
        assert!((base.latency_mean_s - 0.055).abs() < 1e-15);
        assert!((base.latency_std_s - 0.01 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn malformed_line_is_numbered() {
        let good = serde_json::to_string(&rec(Mode::Proposed, 1, 0.02, 1)).unwrap();
        let text = format!("{good}\n\n{{\"round\": 2}}\n");
        match read_metrics(text.as_bytes()) {
            Err(Error::MalformedRecord { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(read_metrics(good.as_bytes()).unwrap().len(), 1);
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn csv_table_has_header() {
        let s = summarize(&[rec(Mode::Proposed, 1, 0.02, 7)]).unwrap();
        let mut buf = Vec::new();
        write_table(&mut buf, &s.modes).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("mode,rounds,latency_mean_s,"), "{text}");
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("proposed,1,0.02,0.0,7,"));
    }
}
