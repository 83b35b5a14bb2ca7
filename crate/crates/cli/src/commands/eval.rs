use std::collections::BTreeMap;

use anyhow::{bail, Context as _, Result};
use serde::Serialize;

use roiaug_core::cohort::{assignment_from_rows, read_fold_file};
use roiaug_core::evalstats::{
    aggregate, evaluate, fold_mean_sd, pr_auc, read_predictions, roc_auc, Level, MetricReport, ViewPrediction,
    REPORT_SCHEMA_VERSION,
};

use super::write_json;
use crate::{Context, EvalArgs, Outcome};

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Serialize)]
pub struct LevelScores {
    pub level: Level,
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub n_units: usize,
}

#[derive(Debug, Serialize)]
pub struct FoldRow {
    pub fold: usize,
    pub source: String,
    pub levels: Vec<LevelScores>,
}

#[derive(Debug, Serialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub spec_version: &'static str,
    pub seed: u64,
    pub n_boot: usize,
    pub confidence: f64,
    /// Pooled over all folds; intervals resample pooled units.
    pub pooled: Vec<MetricReport>,
    pub folds: Vec<FoldRow>,
    /// Patient-level mean and sample SD across folds (two or more folds).
    pub statistics: BTreeMap<String, MeanSd>,
}

fn fold_scores(preds: &[ViewPrediction]) -> Result<Vec<LevelScores>> {
    Level::ALL
        .iter()
        .map(|&level| {
            let units = aggregate(preds, level)?;
            Ok(LevelScores {
                level,
                roc_auc: roc_auc(&units)?,
                pr_auc: pr_auc(&units)?,
                n_units: units.len(),
            })
        })
        .collect()
}

pub fn run(ctx: &Context, args: &EvalArgs) -> Result<Outcome> {
    let outcome = Outcome::default();
    let cfg = &ctx.config;

    // (label, rows) per fold
    let mut groups: Vec<(String, Vec<ViewPrediction>)> = Vec::new();
    match &args.fold_file {
        None => {
            for p in &args.predictions {
                groups.push((p.display().to_string(), read_predictions(p)?));
            }
        }
        Some(ff) => {
            let assignment = assignment_from_rows(&read_fold_file(ff)?)?;
            let mut by_fold: BTreeMap<usize, Vec<ViewPrediction>> = BTreeMap::new();
            for p in &args.predictions {
                for row in read_predictions(p)? {
                    let fold = assignment.fold_of(&row.patient_id).with_context(|| {
                        format!("{}: patient {} is not in {}", p.display(), row.patient_id, ff.display())
                    })?;
                    by_fold.entry(fold).or_default().push(row);
                }
            }
            groups = by_fold
                .into_iter()
                .map(|(f, rows)| (format!("{} fold {f}", ff.display()), rows))
                .collect();
        }
    }

    let mut folds = Vec::new();
    for (i, (source, rows)) in groups.iter().enumerate() {
        let levels = fold_scores(rows).with_context(|| format!("fold {i} ({source})"))?;
        folds.push(FoldRow {
            fold: i,
            source: source.clone(),
            levels,
        });
    }

    let pooled_rows: Vec<ViewPrediction> = groups.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
    let mut owner: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, (_, rows)) in groups.iter().enumerate() {
        for r in rows {
            if let Some(other) = owner.insert(&r.patient_id, i) {
                if other != i {
                    bail!("patient {} has predictions in folds {other} and {i}", r.patient_id);
                }
            }
        }
    }

    let pooled = Level::ALL
        .iter()
        .map(|&level| {
            evaluate(&pooled_rows, level, cfg.eval.n_boot, cfg.eval.confidence, cfg.seed)
                .with_context(|| format!("pooled {level:?}-level metrics"))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut statistics = BTreeMap::new();
    if folds.len() >= 2 {
        for (name, pick) in [("patient_roc_auc", 0usize), ("patient_pr_auc", 1)] {
            let values: Vec<f64> = folds
                .iter()
                .map(|f| {
                    let s = f.levels.iter().find(|l| l.level == Level::Patient).expect("patient level present");
                    if pick == 0 { s.roc_auc } else { s.pr_auc }
                })
                .collect();
            let (mean, sd) = fold_mean_sd(&values)?;
            statistics.insert(name.to_string(), MeanSd { mean, sd });
        }
    }

    let report = Report {
        spec_version: REPORT_SCHEMA_VERSION,
        seed: cfg.seed,
        n_boot: cfg.eval.n_boot,
        confidence: cfg.eval.confidence,
        pooled,
        folds,
        statistics,
    };
    write_json(&ctx.out.join(REPORT_FILE), &report)?;

    println!("{:<8} {:>8} {:>8} {:>17} {:>6} {:>6}", "level", "ROC-AUC", "PR-AUC", "95% CI (ROC)", "pos", "neg");
    for r in &report.pooled {
        println!(
            "{:<8} {:>8.4} {:>8.4} {:>8.4}-{:<8.4} {:>6} {:>6}",
            format!("{:?}", r.level).to_lowercase(),
            r.roc_auc,
            r.pr_auc,
            r.ci_low,
            r.ci_high,
            r.n_pos,
            r.n_neg
        );
    }
    for f in &report.folds {
        let p = f.levels.iter().find(|l| l.level == Level::Patient).expect("patient level present");
        println!("fold {}: patient ROC-AUC {:.4}, PR-AUC {:.4} ({})", f.fold, p.roc_auc, p.pr_auc, f.source);
    }
    if let Some(s) = report.statistics.get("patient_roc_auc") {
        println!("patient ROC-AUC across folds: {:.4} ± {:.4}", s.mean, s.sd);
    }
    Ok(outcome)
}
