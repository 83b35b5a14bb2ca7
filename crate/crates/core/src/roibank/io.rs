//! JSON-lines bank files.
//!
//! One object per line with keys `image_id, source_w, source_h, maskless,
//! boxes, k, config_hash`; each box is `{cx, cy, w, h, score}`. Floats are
//! rounded to 9 significant digits before printing, so a file read back and
//! rewritten is byte-identical.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};

use super::{BankError, RoiBank, ScoredBox};
use crate::geometry::BBox;

fn round_sig9(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.8e}").parse().expect("formatted float parses")
}

fn sig9<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round_sig9(*v))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireBox {
    #[serde(serialize_with = "sig9")]
    cx: f64,
    #[serde(serialize_with = "sig9")]
    cy: f64,
    #[serde(serialize_with = "sig9")]
    w: f64,
    #[serde(serialize_with = "sig9")]
    h: f64,
    #[serde(serialize_with = "sig9")]
    score: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireBank {
    image_id: String,
    source_w: usize,
    source_h: usize,
    maskless: bool,
    boxes: Vec<WireBox>,
    k: usize,
    config_hash: String,
}

/// Serializes one bank as a single JSON line (no trailing newline).
pub fn to_json_line(bank: &RoiBank) -> String {
    let wire = WireBank {
        image_id: bank.image_id.clone(),
        source_w: bank.source_w,
        source_h: bank.source_h,
        maskless: bank.maskless,
        boxes: bank
            .boxes
            .iter()
            .map(|b| WireBox {
                cx: b.bbox.cx,
                cy: b.bbox.cy,
                w: b.bbox.w,
                h: b.bbox.h,
                score: b.score,
            })
            .collect(),
        k: bank.k,
        config_hash: bank.config_hash.clone(),
    };
    serde_json::to_string(&wire).expect("bank serializes")
}

/// Parses and validates one line; `path` and `line` only label errors.
pub fn parse_bank_line(text: &str, path: &str, line: usize) -> Result<RoiBank, BankError> {
    let fail = |detail: String| BankError::Parse {
        path: path.to_string(),
        line,
        detail,
    };
    let wire: WireBank = serde_json::from_str(text).map_err(|e| fail(e.to_string()))?;
    if wire.k < 1 {
        return Err(fail("field k: must be >= 1".into()));
    }
    if wire.source_w < 1 || wire.source_h < 1 {
        return Err(fail("fields source_w/source_h: must be >= 1".into()));
    }
    if wire.boxes.len() > wire.k {
        return Err(fail(format!(
            "bank exceeds K ({} boxes, k = {})",
            wire.boxes.len(),
            wire.k
        )));
    }
    if wire.maskless && !wire.boxes.is_empty() {
        return Err(fail("field boxes: maskless bank must have no boxes".into()));
    }
    let mut boxes = Vec::with_capacity(wire.boxes.len());
    for (i, b) in wire.boxes.iter().enumerate() {
        if !(b.w > 0.0 && b.h > 0.0) {
            return Err(fail(format!("boxes[{i}]: w and h must be positive")));
        }
        if !(b.score >= 0.0) {
            return Err(fail(format!("boxes[{i}].score: must be non-negative")));
        }
        let bbox = BBox::new(b.cx, b.cy, b.w, b.h);
        if !bbox.rasterizes_inside(wire.source_w, wire.source_h) {
            return Err(fail(format!("boxes[{i}]: outside {}x{} source", wire.source_w, wire.source_h)));
        }
        if let Some(prev) = boxes.last().map(|p: &ScoredBox| p.score) {
            if b.score > prev {
                return Err(fail(format!("boxes[{i}].score: scores must be non-increasing")));
            }
        }
        boxes.push(ScoredBox::new(bbox, b.score));
    }
    Ok(RoiBank {
        image_id: wire.image_id,
        source_w: wire.source_w,
        source_h: wire.source_h,
        boxes,
        maskless: wire.maskless,
        k: wire.k,
        config_hash: wire.config_hash,
    })
}

fn io_err(path: &Path, source: std::io::Error) -> BankError {
    BankError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes banks (one per line) through a temp file renamed into place.
pub fn write_banks(banks: &[RoiBank], path: impl AsRef<Path>) -> Result<(), BankError> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(path, e))?;
    {
        let mut out = std::io::BufWriter::new(tmp.as_file_mut());
        for bank in banks {
            writeln!(out, "{}", to_json_line(bank)).map_err(|e| io_err(path, e))?;
        }
        out.flush().map_err(|e| io_err(path, e))?;
    }
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

pub fn write_bank(bank: &RoiBank, path: impl AsRef<Path>) -> Result<(), BankError> {
    write_banks(std::slice::from_ref(bank), path)
}

/// Reads every bank in a JSON-lines file; blank lines are skipped.
pub fn read_banks(path: impl AsRef<Path>) -> Result<Vec<RoiBank>, BankError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let shown = path.display().to_string();
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_bank_line(l, &shown, i + 1))
        .collect()
}

/// Reads a single-bank file.
pub fn read_bank(path: impl AsRef<Path>) -> Result<RoiBank, BankError> {
    let path = path.as_ref();
    let mut banks = read_banks(path)?;
    if banks.len() != 1 {
        return Err(BankError::Parse {
            path: path.display().to_string(),
            line: 1,
            detail: format!("expected exactly one bank, found {}", banks.len()),
        });
    }
    Ok(banks.remove(0))
}
