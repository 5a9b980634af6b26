use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::{Method, SessionResult};
use crate::trainer::DiscountKind;

pub const SUMMARY_CSV: &str = "summary.csv";
pub const HISTOGRAM_CSV: &str = "histogram.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
/// Metadata sidecar written next to each evaluation.
pub const SESSION_JSON: &str = "session.json";

/// Aggregates of one threshold session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    pub tau: f64,
    pub trials: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub n_tau: f64,
    pub itr_selection: f64,
    pub itr_sequence: f64,
    pub histogram: Vec<[usize; 2]>,
}

impl ThresholdSummary {
    pub fn new(tau: f64, result: &SessionResult) -> Self {
        ThresholdSummary {
            tau,
            trials: result.outcomes.len(),
            correct: result.correct,
            accuracy: result.accuracy,
            n_tau: result.n_tau,
            itr_selection: result.itr_selection,
            itr_sequence: result.itr_sequence,
            histogram: result.histogram.clone(),
        }
    }
}

/// Everything one `eval` run produced, plus the config and seeds behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub method: Method,
    pub discount: Option<DiscountKind>,
    pub num_params: usize,
    pub seed: u64,
    pub alphabet: usize,
    pub sequences: usize,
    pub threshold: Option<ThresholdSummary>,
    /// No-threshold accuracy at n = 1..N.
    pub sweep: Option<Vec<f64>>,
    pub config: serde_json::Value,
}

impl SessionRecord {
    /// `method` or `method-discount`.
    pub fn label(&self) -> String {
        label(self.method, self.discount)
    }
}

fn label(method: Method, discount: Option<DiscountKind>) -> String {
    match discount {
        Some(d) => format!("{method}-{d}"),
        None => method.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub discount: String,
    pub num_params: usize,
    pub runs: usize,
    pub itr_selection_mean: f64,
    pub itr_selection_std: f64,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub n_tau_mean: f64,
    pub n_tau_std: f64,
    pub itr_sequence_mean: f64,
    pub itr_sequence_std: f64,
}

const SUMMARY_HEADER: [&str; 12] = [
    "method",
    "discount",
    "num_params",
    "runs",
    "itr_selection_mean",
    "itr_selection_std",
    "accuracy_mean",
    "accuracy_std",
    "n_tau_mean",
    "n_tau_std",
    "itr_sequence_mean",
    "itr_sequence_std",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub method: String,
    pub sequence: usize,
    pub correct_count: usize,
    pub incorrect_count: usize,
}

const HISTOGRAM_HEADER: [&str; 4] = ["method", "sequence", "correct_count", "incorrect_count"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub sequence: usize,
    pub mean_accuracy: f64,
    pub std: f64,
}

const SWEEP_HEADER: [&str; 4] = ["method", "sequence", "mean_accuracy", "std"];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportPaths {
    pub summary: PathBuf,
    pub histogram: PathBuf,
    pub sweep: PathBuf,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn write_csv<R: Serialize>(path: &Path, header: &[&str], rows: &[R]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Group records by method and discount (seeds are the replicates) and
/// write the summary, histogram and sweep CSVs into `dir`.
pub fn export_reports(records: &[SessionRecord], dir: &Path) -> Result<ReportPaths> {
    let mut groups: BTreeMap<(Method, Option<DiscountKind>), Vec<&SessionRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.method, r.discount)).or_default().push(r);
    }

    let mut summary = Vec::new();
    let mut histogram = Vec::new();
    let mut sweep = Vec::new();
    for (&(method, discount), group) in &groups {
        let name = label(method, discount);
        let thresholds: Vec<&ThresholdSummary> =
            group.iter().filter_map(|r| r.threshold.as_ref()).collect();
        if !thresholds.is_empty() {
            let stat = |f: fn(&ThresholdSummary) -> f64| {
                mean_std(&thresholds.iter().map(|t| f(t)).collect::<Vec<_>>())
            };
            let (itr_selection_mean, itr_selection_std) = stat(|t| t.itr_selection);
            let (accuracy_mean, accuracy_std) = stat(|t| t.accuracy);
            let (n_tau_mean, n_tau_std) = stat(|t| t.n_tau);
            let (itr_sequence_mean, itr_sequence_std) = stat(|t| t.itr_sequence);
            summary.push(SummaryRow {
                method: method.to_string(),
                discount: discount.map_or_else(|| "none".to_string(), |d| d.to_string()),
                num_params: group[0].num_params,
                runs: thresholds.len(),
                itr_selection_mean,
                itr_selection_std,
                accuracy_mean,
                accuracy_std,
                n_tau_mean,
                n_tau_std,
                itr_sequence_mean,
                itr_sequence_std,
            });
            let len = thresholds.iter().map(|t| t.histogram.len()).max().unwrap_or(0);
            for n in 0..len {
                let mut counts = [0usize; 2];
                for t in &thresholds {
                    if let Some(h) = t.histogram.get(n) {
                        counts[0] += h[0];
                        counts[1] += h[1];
                    }
                }
                histogram.push(HistogramRow {
                    method: name.clone(),
                    sequence: n + 1,
                    correct_count: counts[0],
                    incorrect_count: counts[1],
                });
            }
        }
        let curves: Vec<&Vec<f64>> = group.iter().filter_map(|r| r.sweep.as_ref()).collect();
        let len = curves.iter().map(|c| c.len()).min().unwrap_or(0);
        for n in 0..len {
            let (mean_accuracy, std) = mean_std(&curves.iter().map(|c| c[n]).collect::<Vec<_>>());
            sweep.push(SweepRow {
                method: name.clone(),
                sequence: n + 1,
                mean_accuracy,
                std,
            });
        }
    }

    std::fs::create_dir_all(dir)?;
    let paths = ReportPaths {
        summary: dir.join(SUMMARY_CSV),
        histogram: dir.join(HISTOGRAM_CSV),
        sweep: dir.join(SWEEP_CSV),
    };
    write_csv(&paths.summary, &SUMMARY_HEADER, &summary)?;
    write_csv(&paths.histogram, &HISTOGRAM_HEADER, &histogram)?;
    write_csv(&paths.sweep, &SWEEP_HEADER, &sweep)?;
    Ok(paths)
}
