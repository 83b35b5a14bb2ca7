//! Patient-level evaluation: ROC/PR metrics, aggregation, bootstrap
//! intervals, fold summaries and the paired signed-rank test.

mod bootstrap;
mod metrics;
mod wilcoxon;

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{Side, View};

pub use bootstrap::{bootstrap_ci, BootstrapCi, Metric, MAX_REDRAWS};
pub use metrics::{aggregate, pr_auc, roc_auc, Level, Prediction, ViewPrediction};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonResult, EXACT_MAX_N};

pub const REPORT_SCHEMA_VERSION: &str = "1.0";

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("empty input: {0}")]
    Empty(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("degenerate test: {0}")]
    Degenerate(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{row}: column {column}: {detail}")]
    Parse {
        path: String,
        row: usize,
        column: String,
        detail: String,
    },
}

/// Arithmetic mean and sample standard deviation (n - 1 denominator).
pub fn fold_mean_sd(values: &[f64]) -> Result<(f64, f64), StatsError> {
    if values.len() < 2 {
        return Err(StatsError::Argument(format!(
            "standard deviation needs at least 2 values, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

/// Point estimates and a bootstrap interval at one aggregation level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub level: Level,
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    /// Replicates dropped after exhausting redraws.
    pub skipped_replicates: usize,
}

impl MetricReport {
    /// False when the interval does not bracket the point estimate.
    pub fn ci_contains_estimate(&self) -> bool {
        self.ci_low <= self.roc_auc && self.roc_auc <= self.ci_high
    }
}

/// Metrics at `level` with a ROC-AUC percentile interval.
pub fn evaluate(
    preds: &[ViewPrediction],
    level: Level,
    n_boot: usize,
    conf: f64,
    seed: u64,
) -> Result<MetricReport, StatsError> {
    let units = aggregate(preds, level)?;
    let roc = roc_auc(&units)?;
    let pr = pr_auc(&units)?;
    let ci = bootstrap_ci(&units, Metric::RocAuc, n_boot, conf, seed)?;
    let (n_pos, n_neg) = metrics::class_counts(&units);
    Ok(MetricReport {
        level,
        roc_auc: roc,
        pr_auc: pr,
        ci_low: ci.low,
        ci_high: ci.high,
        n_pos,
        n_neg,
        skipped_replicates: ci.skipped,
    })
}

#[derive(Deserialize)]
struct CsvRow {
    unit_id: String,
    patient_id: String,
    side: String,
    view: String,
    score: String,
    label: String,
}

/// Reads a predictions CSV with header
/// `unit_id,patient_id,side,view,score,label`.
pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<ViewPrediction>, StatsError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let file = File::open(path).map_err(|e| StatsError::Io {
        path: shown.clone(),
        source: e,
    })?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| parse_err(&shown, 1, "header", e.to_string()))?
        .clone();
    let expected = ["unit_id", "patient_id", "side", "view", "score", "label"];
    if header.iter().map(str::trim).collect::<Vec<_>>() != expected {
        return Err(parse_err(
            &shown,
            1,
            "header",
            format!("expected {}", expected.join(",")),
        ));
    }
    let mut out = Vec::new();
    for (i, rec) in reader.deserialize::<CsvRow>().enumerate() {
        let row = i + 2;
        let r = rec.map_err(|e| parse_err(&shown, row, "*", e.to_string()))?;
        let side: Side = r
            .side
            .trim()
            .parse()
            .map_err(|_| parse_err(&shown, row, "side", format!("unknown side {:?}", r.side)))?;
        let view: View = r
            .view
            .trim()
            .parse()
            .map_err(|_| parse_err(&shown, row, "view", format!("unknown view {:?}", r.view)))?;
        let score: f64 = r
            .score
            .trim()
            .parse()
            .map_err(|_| parse_err(&shown, row, "score", format!("not a number: {:?}", r.score)))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(parse_err(&shown, row, "score", format!("{score} outside [0, 1]")));
        }
        let label = match r.label.trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(parse_err(&shown, row, "label", format!("expected 0 or 1, got {other:?}"))),
        };
        out.push(ViewPrediction {
            unit_id: r.unit_id,
            patient_id: r.patient_id,
            side,
            view,
            score,
            label,
        });
    }
    if out.is_empty() {
        return Err(StatsError::Empty(format!("{shown}: no prediction rows")));
    }
    Ok(out)
}

fn parse_err(path: &str, row: usize, column: &str, detail: String) -> StatsError {
    StatsError::Parse {
        path: path.to_string(),
        row,
        column: column.to_string(),
        detail,
    }
}

pub fn write_predictions(preds: &[ViewPrediction], path: impl AsRef<Path>) -> Result<(), StatsError> {
    let path = path.as_ref();
    let io = |e: std::io::Error| StatsError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
    w.write_record(["unit_id", "patient_id", "side", "view", "score", "label"])
        .map_err(|e| io(e.into()))?;
    for p in preds {
        w.write_record([
            p.unit_id.clone(),
            p.patient_id.clone(),
            p.side.to_string(),
            p.view.to_string(),
            p.score.to_string(),
            p.label.to_string(),
        ])
        .map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round4(v: f64) -> f64 {
        (v * 1e4).round() / 1e4
    }

    #[test]
    fn reference_fold_rows_mean_sd() {
        let (m, s) = fold_mean_sd(&[0.9189, 0.9228, 0.9056, 0.9103]).unwrap();
        assert_eq!((round4(m), round4(s)), (0.9144, 0.0079));
        let (m, s) = fold_mean_sd(&[0.9157, 0.9249, 0.9247, 0.9072]).unwrap();
        assert_eq!((round4(m), round4(s)), (0.9181, 0.0085));
    }

    #[test]
    fn mean_sd_edges() {
        assert_eq!(fold_mean_sd(&[0.5, 0.5, 0.5]).unwrap(), (0.5, 0.0));
        assert!(fold_mean_sd(&[0.5]).is_err());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        let rows = vec![ViewPrediction {
            unit_id: "a/LEFT_CC".into(),
            patient_id: "a".into(),
            side: Side::Left,
            view: View::Cc,
            score: 0.25,
            label: 1,
        }];
        write_predictions(&rows, &p).unwrap();
        assert_eq!(read_predictions(&p).unwrap(), rows);

        std::fs::write(&p, "unit_id,patient_id,side,view,score,label\nx,a,LEFT,CC,1.5,0\n").unwrap();
        let err = read_predictions(&p).unwrap_err().to_string();
        assert!(err.contains(":2: column score"), "{err}");
        std::fs::write(&p, "unit_id,patient_id,side,view,score,label\nx,a,UP,CC,0.5,0\n").unwrap();
        assert!(read_predictions(&p).unwrap_err().to_string().contains("column side"));
    }
}
