//! Image manifests, patient-level folds and leakage checks.
//!
//! Every image of a patient lands in the same fold. Patients are stratified
//! by patient-level label (positive when any image is positive), shuffled
//! within each stratum with a seeded stream, and dealt round-robin with the
//! deal position carried across strata so fold sizes differ by at most one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::DrawStream;

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("manifest {0} yielded no usable records")]
    Empty(String),
    #[error("invalid argument: {0}")]
    Argument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum View {
    Cc,
    Mlo,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "LEFT",
            Side::Right => "RIGHT",
        })
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            View::Cc => "CC",
            View::Mlo => "MLO",
        })
    }
}

impl FromStr for Side {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "LEFT" | "L" => Ok(Side::Left),
            "RIGHT" | "R" => Ok(Side::Right),
            _ => Err(format!("unknown side {s:?}")),
        }
    }
}

impl FromStr for View {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "CC" => Ok(View::Cc),
            "MLO" => Ok(View::Mlo),
            _ => Err(format!("unknown view {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub image_id: String,
    pub patient_id: String,
    pub side: Side,
    pub view: View,
    pub label: u8,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    /// Sorted by `(patient_id, side, view, path)`.
    pub records: Vec<ImageRecord>,
    pub rejects: Vec<Reject>,
}

/// `cancer` maps to 1, `benign` and `normal` to 0 (case-insensitive).
pub fn label_from_class(token: &str) -> Option<u8> {
    match token.to_ascii_lowercase().as_str() {
        "cancer" => Some(1),
        "benign" | "normal" => Some(0),
        _ => None,
    }
}

/// Derives a record from a path like `.../Cancer/0123/RIGHT_CC.png`: class
/// from any component, patient from the parent directory, side and view
/// from tokens of the file stem.
pub fn record_from_path(path: &Path, root: &Path) -> Result<ImageRecord, String> {
    let comps: Vec<String> = path
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect();
    let label = comps
        .iter()
        .rev()
        .find_map(|c| label_from_class(c))
        .ok_or("no cancer/benign/normal component")?;
    let patient_id = path
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|p| label_from_class(p).is_none())
        .ok_or("no patient directory")?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or("no file name")?;
    let tokens: Vec<&str> = stem.split(['_', '.', '-', ' ']).collect();
    let side = tokens
        .iter()
        .find_map(|t| match t.to_ascii_uppercase().as_str() {
            "LEFT" => Some(Side::Left),
            "RIGHT" => Some(Side::Right),
            _ => None,
        })
        .ok_or("no LEFT/RIGHT token in file name")?;
    let view = tokens
        .iter()
        .find_map(|t| t.parse::<View>().ok())
        .ok_or("no CC/MLO token in file name")?;
    let rel = path.strip_prefix(root).unwrap_or(path);
    let image_id = rel.with_extension("").to_string_lossy().replace('\\', "/");
    Ok(ImageRecord {
        image_id,
        patient_id,
        side,
        view,
        label,
        path: path.to_path_buf(),
    })
}

fn sort_records(records: &mut [ImageRecord]) {
    records.sort_by(|a, b| {
        (&a.patient_id, a.side, a.view, &a.path).cmp(&(&b.patient_id, b.side, b.view, &b.path))
    });
}

fn io_err(path: &Path, source: std::io::Error) -> CohortError {
    CohortError::Io {
        path: path.display().to_string(),
        source,
    }
}

const MANIFEST_HEADER: [&str; 6] = ["image_id", "patient_id", "side", "view", "label", "path"];

fn parse_manifest_tsv(path: &Path) -> Result<Manifest, CohortError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let shown = path.display().to_string();
    let base = path.parent().unwrap_or(Path::new(""));
    let fail = |line: usize, detail: String| CohortError::Parse {
        path: shown.clone(),
        line,
        detail,
    };
    let mut lines = text.lines().enumerate();
    let header: Vec<&str> = lines
        .next()
        .map(|(_, l)| l.split('\t').map(str::trim).collect())
        .unwrap_or_default();
    if header != MANIFEST_HEADER {
        return Err(fail(1, format!("header must be {}", MANIFEST_HEADER.join("\\t"))));
    }
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 {
            return Err(fail(lineno, format!("expected 6 columns, found {}", cols.len())));
        }
        let side = cols[2].parse::<Side>().map_err(|e| fail(lineno, format!("column side: {e}")))?;
        let view = cols[3].parse::<View>().map_err(|e| fail(lineno, format!("column view: {e}")))?;
        let label = match cols[4].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(fail(lineno, format!("column label: {other:?} is not 0 or 1"))),
        };
        let raw = PathBuf::from(cols[5]);
        let path = if raw.is_absolute() { raw } else { base.join(raw) };
        let key = (cols[1].to_string(), side, view, path.clone());
        if !seen.insert(key) {
            return Err(fail(lineno, "duplicate (patient_id, side, view, path)".into()));
        }
        records.push(ImageRecord {
            image_id: cols[0].to_string(),
            patient_id: cols[1].to_string(),
            side,
            view,
            label,
            path,
        });
    }
    sort_records(&mut records);
    Ok(Manifest {
        records,
        rejects: Vec::new(),
    })
}

fn is_image_file(p: &Path) -> bool {
    p.extension()
        .map(|e| matches!(e.to_ascii_lowercase().to_str(), Some("png" | "pgm")))
        .unwrap_or(false)
}

/// Reads a TSV manifest file, or walks a directory tree deriving records
/// from paths. Unparseable paths go to `rejects`.
pub fn parse_manifest(root: impl AsRef<Path>) -> Result<Manifest, CohortError> {
    let root = root.as_ref();
    let manifest = if root.is_dir() {
        let mut records = Vec::new();
        let mut rejects = Vec::new();
        for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
            let entry = entry.map_err(|e| CohortError::Io {
                path: root.display().to_string(),
                source: e.into(),
            })?;
            let p = entry.path();
            if !entry.file_type().is_file() || !is_image_file(p) {
                continue;
            }
            match record_from_path(p, root) {
                Ok(r) => records.push(r),
                Err(reason) => rejects.push(Reject {
                    path: p.to_path_buf(),
                    reason: reason.to_string(),
                }),
            }
        }
        sort_records(&mut records);
        Manifest { records, rejects }
    } else {
        parse_manifest_tsv(root)?
    };
    if manifest.records.is_empty() {
        return Err(CohortError::Empty(root.display().to_string()));
    }
    Ok(manifest)
}

pub fn write_manifest(records: &[ImageRecord], path: impl AsRef<Path>) -> Result<(), CohortError> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&MANIFEST_HEADER.join("\t"));
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.image_id,
            r.patient_id,
            r.side,
            r.view,
            r.label,
            r.path.display()
        ));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Patient-level label: positive when any image is positive.
pub fn patient_labels(records: &[ImageRecord]) -> BTreeMap<String, u8> {
    let mut labels = BTreeMap::new();
    for r in records {
        let e = labels.entry(r.patient_id.clone()).or_insert(0);
        *e = (*e).max(r.label);
    }
    labels
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub n_folds: usize,
    pub map: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, patient_id: &str) -> Option<usize> {
        self.map.get(patient_id).copied()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in self.map.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// Patients held out in `fold`.
    pub fn validation_patients(&self, fold: usize) -> BTreeSet<&str> {
        self.map
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(p, _)| p.as_str())
            .collect()
    }

    pub fn rows(&self) -> Vec<FoldRow> {
        self.map
            .iter()
            .map(|(p, &f)| FoldRow {
                patient_id: p.clone(),
                fold: f,
            })
            .collect()
    }
}

pub fn assign_folds(records: &[ImageRecord], n_folds: usize, seed: u64) -> Result<FoldAssignment, CohortError> {
    if n_folds < 2 {
        return Err(CohortError::Argument(format!("n_folds must be >= 2, got {n_folds}")));
    }
    let labels = patient_labels(records);
    if labels.len() < n_folds {
        return Err(CohortError::Argument(format!(
            "{} patients cannot fill {n_folds} folds",
            labels.len()
        )));
    }
    let mut pos: Vec<&String> = labels.iter().filter(|(_, &l)| l == 1).map(|(p, _)| p).collect();
    let mut neg: Vec<&String> = labels.iter().filter(|(_, &l)| l == 0).map(|(p, _)| p).collect();
    let mut rng = DrawStream::new(seed);
    rng.shuffle(&mut pos);
    rng.shuffle(&mut neg);
    let mut map = BTreeMap::new();
    for (i, p) in pos.into_iter().chain(neg).enumerate() {
        map.insert(p.clone(), i % n_folds);
    }
    Ok(FoldAssignment { n_folds, map })
}

/// One `patient_id, fold` row of a fold file; files from outside may
/// contain conflicting rows, which is what the leakage check looks for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldRow {
    pub patient_id: String,
    pub fold: usize,
}

pub fn write_fold_file(assignment: &FoldAssignment, path: impl AsRef<Path>) -> Result<(), CohortError> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = String::from("patient_id\tfold\n");
    for row in assignment.rows() {
        out.push_str(&format!("{}\t{}\n", row.patient_id, row.fold));
    }
    f.write_all(out.as_bytes()).map_err(|e| io_err(path, e))
}

pub fn read_fold_file(path: impl AsRef<Path>) -> Result<Vec<FoldRow>, CohortError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let shown = path.display().to_string();
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.split('\t').map(str::trim).collect::<Vec<_>>() != ["patient_id", "fold"] {
                return Err(CohortError::Parse {
                    path: shown,
                    line: 1,
                    detail: "header must be patient_id\\tfold".into(),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (pid, fold) = line.split_once('\t').ok_or_else(|| CohortError::Parse {
            path: shown.clone(),
            line: i + 1,
            detail: "expected 2 tab-separated columns".into(),
        })?;
        let fold = fold.trim().parse::<usize>().map_err(|e| CohortError::Parse {
            path: shown.clone(),
            line: i + 1,
            detail: format!("column fold: {e}"),
        })?;
        rows.push(FoldRow {
            patient_id: pid.to_string(),
            fold,
        });
    }
    Ok(rows)
}

/// Collapses rows into an assignment, rejecting patients mapped to
/// different folds.
pub fn assignment_from_rows(rows: &[FoldRow]) -> Result<FoldAssignment, CohortError> {
    let mut map = BTreeMap::new();
    for r in rows {
        if let Some(prev) = map.insert(r.patient_id.clone(), r.fold) {
            if prev != r.fold {
                return Err(CohortError::Argument(format!(
                    "patient {} assigned to folds {prev} and {}",
                    r.patient_id, r.fold
                )));
            }
        }
    }
    let n_folds = map.values().max().map_or(0, |m| m + 1);
    Ok(FoldAssignment { n_folds, map })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LeakageReport {
    /// Patients mapped to more than one fold, with the folds seen.
    pub multi_fold_patients: Vec<(String, Vec<usize>)>,
    /// Image ids whose patient has no fold.
    pub unassigned_images: Vec<String>,
}

impl LeakageReport {
    pub fn passed(&self) -> bool {
        self.multi_fold_patients.is_empty() && self.unassigned_images.is_empty()
    }
}

/// Checks that every patient sits in exactly one fold and every image's
/// patient is assigned.
pub fn verify_no_leakage(records: &[ImageRecord], rows: &[FoldRow]) -> LeakageReport {
    let mut folds: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for r in rows {
        folds.entry(&r.patient_id).or_default().insert(r.fold);
    }
    let multi_fold_patients = folds
        .iter()
        .filter(|(_, f)| f.len() > 1)
        .map(|(p, f)| (p.to_string(), f.iter().copied().collect()))
        .collect();
    let unassigned_images = records
        .iter()
        .filter(|r| !folds.contains_key(r.patient_id.as_str()))
        .map(|r| r.image_id.clone())
        .collect();
    LeakageReport {
        multi_fold_patients,
        unassigned_images,
    }
}
