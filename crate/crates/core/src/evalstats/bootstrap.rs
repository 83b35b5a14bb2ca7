use serde::{Deserialize, Serialize};

use super::metrics::{pr_auc_pairs, roc_auc_pairs, Prediction};
use super::StatsError;
use crate::rng::DrawStream;

/// Redraws allowed for a single-class replicate before it is skipped.
pub const MAX_REDRAWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    RocAuc,
    PrAuc,
}

impl Metric {
    fn eval(self, rows: &mut [(f64, u8)]) -> Result<f64, StatsError> {
        match self {
            Metric::RocAuc => roc_auc_pairs(rows),
            Metric::PrAuc => pr_auc_pairs(rows),
        }
    }

    fn computable(self, n_pos: usize, n_neg: usize) -> bool {
        match self {
            Metric::RocAuc => n_pos > 0 && n_neg > 0,
            Metric::PrAuc => n_pos > 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub low: f64,
    pub high: f64,
    /// Replicates that contributed to the interval.
    pub replicates: usize,
    pub skipped: usize,
}

/// Nearest-rank percentile of an ascending slice.
fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = (p * n as f64 - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Percentile interval from `n_boot` resamples of the units in `preds`.
///
/// Replicate `r` draws from `DrawStream::child(seed, r)`, so the result does
/// not depend on how replicates are scheduled.
pub fn bootstrap_ci(
    preds: &[Prediction],
    metric: Metric,
    n_boot: usize,
    conf: f64,
    seed: u64,
) -> Result<BootstrapCi, StatsError> {
    if n_boot == 0 {
        return Err(StatsError::Argument("n_boot must be >= 1".into()));
    }
    if !(conf > 0.0 && conf < 1.0) {
        return Err(StatsError::Argument(format!("confidence level {conf} outside (0, 1)")));
    }
    let base: Vec<(f64, u8)> = preds.iter().map(|p| (p.score, p.label)).collect();
    // the full-sample metric must be defined
    metric.eval(&mut base.clone())?;

    let n = base.len();
    let mut values = Vec::with_capacity(n_boot);
    let mut skipped = 0;
    let mut sample = vec![(0.0, 0u8); n];
    for r in 0..n_boot {
        let mut rng = DrawStream::child(seed, r as u64);
        let mut ok = false;
        for _ in 0..=MAX_REDRAWS {
            let mut n_pos = 0;
            for slot in sample.iter_mut() {
                *slot = base[rng.index(n)];
                n_pos += slot.1 as usize;
            }
            if metric.computable(n_pos, n - n_pos) {
                ok = true;
                break;
            }
        }
        if ok {
            values.push(metric.eval(&mut sample)?);
        } else {
            skipped += 1;
        }
    }
    if values.is_empty() {
        return Err(StatsError::UndefinedMetric(format!(
            "all {n_boot} bootstrap replicates were single-class"
        )));
    }
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - conf) / 2.0;
    Ok(BootstrapCi {
        low: nearest_rank(&values, tail),
        high: nearest_rank(&values, 1.0 - tail),
        replicates: values.len(),
        skipped,
    })
}
