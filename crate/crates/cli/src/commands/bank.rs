use std::time::Instant;

use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

use roiaug_core::raster::load_gray;
use roiaug_core::roibank::{build_bank, config_hash, write_banks, RoiBank};

use super::{load_training_records, write_json};
use crate::{BankArgs, Context, Outcome};

pub const BANKS_FILE: &str = "banks.jsonl";
pub const SUMMARY_FILE: &str = "bank_summary.json";

/// Deterministic part of the run summary; timing goes to stdout only.
#[derive(Debug, Serialize)]
pub struct BankSummary {
    pub images: usize,
    pub banks: usize,
    pub failed: usize,
    pub maskless: usize,
    pub mean_boxes: f64,
    pub config_hash: String,
    pub fold: Option<usize>,
}

pub fn run(ctx: &Context, args: &BankArgs) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    let cfg = &ctx.config;
    let records = load_training_records(&args.manifest, &args.folds, &mut outcome)?;

    let started = Instant::now();
    let results: Vec<Result<RoiBank, String>> = records
        .par_iter()
        .map(|(_, rec)| {
            let img = load_gray(&rec.path).map_err(|e| e.to_string())?;
            build_bank(&img, &rec.image_id, &cfg.mask, &cfg.saliency, &cfg.bank)
                .map_err(|e| format!("{}: {e}", rec.image_id))
        })
        .collect();
    let elapsed = started.elapsed().as_secs_f64();

    let mut banks = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(b) => banks.push(b),
            Err(e) => outcome.error(e),
        }
    }
    for b in banks.iter().filter(|b| b.maskless) {
        outcome.warn(format!("{}: no tissue mask, bank left empty", b.image_id));
    }
    write_banks(&banks, ctx.out.join(BANKS_FILE))?;

    let with_boxes: Vec<&RoiBank> = banks.iter().filter(|b| !b.maskless).collect();
    let summary = BankSummary {
        images: records.len(),
        banks: banks.len(),
        failed: records.len() - banks.len(),
        maskless: banks.len() - with_boxes.len(),
        mean_boxes: if with_boxes.is_empty() {
            0.0
        } else {
            with_boxes.iter().map(|b| b.boxes.len()).sum::<usize>() as f64 / with_boxes.len() as f64
        },
        config_hash: config_hash(&cfg.mask, &cfg.saliency, &cfg.bank),
        fold: args.folds.fold,
    };
    write_json(&ctx.out.join(SUMMARY_FILE), &summary)?;
    let per_sec = if elapsed > 0.0 { records.len() as f64 / elapsed } else { f64::INFINITY };
    println!(
        "bank: {} images, {} banks, {} maskless, {:.2} boxes/bank, {:.1} images/s ({:.1} ms/image, {} workers)",
        summary.images,
        summary.banks,
        summary.maskless,
        summary.mean_boxes,
        per_sec,
        1e3 / per_sec,
        rayon::current_num_threads()
    );
    Ok(outcome)
}
