use anyhow::{bail, Result};
use serde::Serialize;

use roiaug_core::evalstats::{fold_mean_sd, wilcoxon_signed_rank, WilcoxonResult};

use super::write_json;
use crate::{Context, Outcome, StatsArgs};

pub const STATS_FILE: &str = "stats.json";

#[derive(Debug, Serialize)]
pub struct MethodSummary {
    pub name: String,
    pub values: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Serialize)]
pub struct StatsReport {
    pub metric: String,
    pub a: MethodSummary,
    pub b: MethodSummary,
    /// `mean(a) - mean(b)`.
    pub delta: f64,
    pub wilcoxon: WilcoxonResult,
}

fn summarize(name: &str, values: &[f64]) -> Result<MethodSummary> {
    let (mean, sd) = fold_mean_sd(values)?;
    Ok(MethodSummary {
        name: name.to_string(),
        values: values.to_vec(),
        mean,
        sd,
    })
}

/// Builds the comparison without touching the filesystem.
pub fn compare(args: &StatsArgs) -> Result<StatsReport> {
    if args.a.len() != args.b.len() {
        bail!("--a has {} values but --b has {}", args.a.len(), args.b.len());
    }
    let a = summarize(&args.a_name, &args.a)?;
    let b = summarize(&args.b_name, &args.b)?;
    let wilcoxon = wilcoxon_signed_rank(&args.a, &args.b)?;
    Ok(StatsReport {
        metric: args.metric.clone(),
        delta: a.mean - b.mean,
        a,
        b,
        wilcoxon,
    })
}

pub fn render(report: &StatsReport) -> String {
    let width = report.a.name.len().max(report.b.name.len()).max(6);
    let mut s = format!("{:<width$}  {}\n", "method", report.metric);
    for m in [&report.a, &report.b] {
        s += &format!("{:<width$}  {:.4} ± {:.4}\n", m.name, m.mean, m.sd);
    }
    s += &format!("Δ ({} - {}) {:+.4}\n", report.a.name, report.b.name, report.delta);
    let w = &report.wilcoxon;
    s += &format!(
        "Wilcoxon signed-rank: n = {}, W+ = {}, W- = {}, p = {:.4} ({})\n",
        w.n,
        w.w_plus,
        w.w_minus,
        w.p_value,
        if w.exact { "exact" } else { "normal approximation" }
    );
    s
}

pub fn run(ctx: &Context, args: &StatsArgs) -> Result<Outcome> {
    let report = compare(args)?;
    write_json(&ctx.out.join(STATS_FILE), &report)?;
    print!("{}", render(&report));
    Ok(Outcome::default())
}
