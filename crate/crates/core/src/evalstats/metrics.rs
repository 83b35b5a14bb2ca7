use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::cohort::{Side, View};

/// One scored unit (view, breast or patient).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub unit_id: String,
    pub score: f64,
    pub label: u8,
}

impl Prediction {
    pub fn new(unit_id: impl Into<String>, score: f64, label: u8) -> Self {
        Self {
            unit_id: unit_id.into(),
            score,
            label,
        }
    }
}

/// A view-level row of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewPrediction {
    pub unit_id: String,
    pub patient_id: String,
    pub side: Side,
    pub view: View,
    pub score: f64,
    pub label: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    View,
    Breast,
    Patient,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::View, Level::Breast, Level::Patient];
}

/// Averages scores within each breast or patient; the group label is the
/// OR of member labels. Output is sorted by group key.
pub fn aggregate(preds: &[ViewPrediction], level: Level) -> Result<Vec<Prediction>, StatsError> {
    if preds.is_empty() {
        return Err(StatsError::Empty("no predictions to aggregate".into()));
    }
    let mut groups: BTreeMap<String, (Vec<f64>, u8)> = BTreeMap::new();
    for p in preds {
        let key = match level {
            Level::View => p.unit_id.clone(),
            Level::Breast => format!("{}/{}", p.patient_id, p.side),
            Level::Patient => p.patient_id.clone(),
        };
        let g = groups.entry(key).or_default();
        g.0.push(p.score);
        g.1 = g.1.max(p.label);
    }
    // members are summed in sorted order so row order cannot perturb the mean
    Ok(groups
        .into_iter()
        .map(|(k, (mut scores, label))| {
            scores.sort_by(f64::total_cmp);
            let n = scores.len() as f64;
            Prediction::new(k, scores.iter().sum::<f64>() / n, label)
        })
        .collect())
}

pub(crate) fn class_counts(preds: &[Prediction]) -> (usize, usize) {
    let pos = preds.iter().filter(|p| p.label == 1).count();
    (pos, preds.len() - pos)
}

fn pairs(preds: &[Prediction]) -> Vec<(f64, u8)> {
    preds.iter().map(|p| (p.score, p.label)).collect()
}

/// Mann-Whitney AUC with midranks for tied scores.
pub fn roc_auc(preds: &[Prediction]) -> Result<f64, StatsError> {
    roc_auc_pairs(&mut pairs(preds))
}

/// Average precision: `sum_k (R_k - R_{k-1}) P_k` over descending score
/// thresholds, each block of tied scores taken as one threshold.
pub fn pr_auc(preds: &[Prediction]) -> Result<f64, StatsError> {
    pr_auc_pairs(&mut pairs(preds))
}

/// `(score, label)` form; sorts `rows` in place.
pub(crate) fn roc_auc_pairs(rows: &mut [(f64, u8)]) -> Result<f64, StatsError> {
    let n_pos = rows.iter().filter(|r| r.1 == 1).count();
    let n_neg = rows.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(StatsError::UndefinedMetric(format!(
            "ROC-AUC needs both classes (positives {n_pos}, negatives {n_neg})"
        )));
    }
    rows.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < rows.len() {
        let mut j = i;
        let mut pos_in_block = 0usize;
        while j < rows.len() && rows[j].0 == rows[i].0 {
            pos_in_block += (rows[j].1 == 1) as usize;
            j += 1;
        }
        // 1-based ranks i+1 ..= j
        let midrank = (i + 1 + j) as f64 / 2.0;
        pos_rank_sum += midrank * pos_in_block as f64;
        i = j;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

pub(crate) fn pr_auc_pairs(rows: &mut [(f64, u8)]) -> Result<f64, StatsError> {
    let n_pos = rows.iter().filter(|r| r.1 == 1).count();
    if n_pos == 0 {
        return Err(StatsError::UndefinedMetric("PR-AUC needs at least one positive".into()));
    }
    rows.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < rows.len() {
        let score = rows[i].0;
        while i < rows.len() && rows[i].0 == score {
            if rows[i].1 == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}
