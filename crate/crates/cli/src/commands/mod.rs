pub mod bank;
pub mod eval;
pub mod sample;
pub mod split;
pub mod stats;
pub mod viz;

use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context as _, Result};

use roiaug_core::cohort::{assignment_from_rows, read_fold_file, verify_no_leakage, ImageRecord, Manifest};

use crate::{FoldSelect, Outcome};

/// Manifest records kept for a command, each with its index in the full
/// manifest (the key for per-image random streams).
pub type Selected = Vec<(usize, ImageRecord)>;

/// Loads a manifest, reports path rejects as warnings and, when a fold is
/// selected, keeps only that fold's training patients after a leakage check.
pub fn load_training_records(manifest: &Path, folds: &FoldSelect, outcome: &mut Outcome) -> Result<Selected> {
    let Manifest { records, rejects } = roiaug_core::cohort::parse_manifest(manifest)?;
    for r in &rejects {
        outcome.warn(format!("skipped {}: {}", r.path.display(), r.reason));
    }
    let indexed: Selected = records.into_iter().enumerate().collect();
    let (Some(fold_file), Some(fold)) = (&folds.fold_file, folds.fold) else {
        return Ok(indexed);
    };
    let rows = read_fold_file(fold_file)?;
    let all: Vec<ImageRecord> = indexed.iter().map(|(_, r)| r.clone()).collect();
    let report = verify_no_leakage(&all, &rows);
    if !report.passed() {
        for (p, f) in report.multi_fold_patients.iter().take(10) {
            outcome.error(format!("patient {p} appears in folds {f:?}"));
        }
        for id in report.unassigned_images.iter().take(10) {
            outcome.error(format!("image {id} has no fold in {}", fold_file.display()));
        }
        bail!(
            "fold file {} failed the leakage check ({} multi-fold patients, {} unassigned images)",
            fold_file.display(),
            report.multi_fold_patients.len(),
            report.unassigned_images.len()
        );
    }
    let assignment = assignment_from_rows(&rows)?;
    if fold >= assignment.n_folds {
        bail!("--fold {fold} out of range; {} has {} folds", fold_file.display(), assignment.n_folds);
    }
    Ok(indexed
        .into_iter()
        .filter(|(_, r)| assignment.fold_of(&r.patient_id) != Some(fold))
        .collect())
}

/// Writes through a temp file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("writing {}", path.display()))?;
    tmp.write_all(bytes)?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// File-name-safe form of an image id.
pub fn file_stem(image_id: &str) -> String {
    image_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}
