use anyhow::{bail, Result};

use roiaug_core::cohort::{assign_folds, patient_labels, verify_no_leakage, write_fold_file, Manifest};

use crate::{Context, Outcome, SplitArgs};

pub const FOLDS_FILE: &str = "folds.tsv";

pub fn run(ctx: &Context, args: &SplitArgs) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    let Manifest { records, rejects } = roiaug_core::cohort::parse_manifest(&args.manifest)?;
    for r in &rejects {
        outcome.warn(format!("skipped {}: {}", r.path.display(), r.reason));
    }
    let n_folds = ctx.config.folds.n_folds;
    let assignment = assign_folds(&records, n_folds, ctx.config.seed)?;
    let report = verify_no_leakage(&records, &assignment.rows());
    if !report.passed() {
        bail!("internal error: generated folds leak patients: {report:?}");
    }
    let path = ctx.out.join(FOLDS_FILE);
    write_fold_file(&assignment, &path)?;

    let labels = patient_labels(&records);
    println!("split: {} patients, {} images, {n_folds} folds -> {}", labels.len(), records.len(), path.display());
    for (fold, size) in assignment.fold_sizes().iter().enumerate() {
        let pos = assignment
            .map
            .iter()
            .filter(|(p, &f)| f == fold && labels.get(p.as_str()) == Some(&1))
            .count();
        println!("  fold {fold}: {size} patients ({pos} positive)");
    }
    Ok(outcome)
}
