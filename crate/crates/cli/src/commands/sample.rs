use std::collections::HashMap;
use std::fmt::Write as _;

use anyhow::{Context as _, Result};
use rayon::prelude::*;
use serde::Serialize;

use roiaug_core::augment::augment_one;
use roiaug_core::geometry::BBox;
use roiaug_core::raster::{load_gray, save_pgm, save_png, BitDepth};
use roiaug_core::rng::{DrawStream, StreamFixture};
use roiaug_core::roibank::{config_hash, read_banks, RoiBank};
use roiaug_core::tissue::build_tissue_mask;

use super::{file_stem, load_training_records, write_atomic, write_json};
use crate::{Context, ImageFormat, Outcome, SampleArgs};

pub const AUDIT_FILE: &str = "audit.jsonl";
pub const FIXTURE_FILE: &str = "rng_fixture.json";
pub const SAMPLES_DIR: &str = "samples";

/// Draws and split seeds stored in the fixture file.
const FIXTURE_DRAWS: usize = 64;
const FIXTURE_SPLITS: usize = 16;

/// One line of the audit log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRecord {
    pub image_id: String,
    /// Position in the full manifest; the image's stream is `child(seed, record_index)`.
    pub record_index: usize,
    pub sample_index: usize,
    pub seed: u64,
    pub used_roi: bool,
    pub bank_index: Option<usize>,
    pub chosen_box: Option<BBox>,
    pub retries_used: usize,
}

pub fn run(ctx: &Context, args: &SampleArgs) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    let cfg = &ctx.config;
    let records = load_training_records(&args.manifest, &args.folds, &mut outcome)?;
    let banks: HashMap<String, RoiBank> = read_banks(&args.banks)?
        .into_iter()
        .map(|b| (b.image_id.clone(), b))
        .collect();
    let expected_hash = config_hash(&cfg.mask, &cfg.saliency, &cfg.bank);
    if banks.values().any(|b| b.config_hash != expected_hash) {
        outcome.warn(format!(
            "{} was built with a different mask/saliency/bank config",
            args.banks.display()
        ));
    }

    let sample_dir = ctx.out.join(SAMPLES_DIR);
    if !args.audit_only {
        std::fs::create_dir_all(&sample_dir).with_context(|| format!("creating {}", sample_dir.display()))?;
    }

    type PerImage = (Vec<AuditRecord>, Vec<String>, Option<String>);
    let results: Vec<PerImage> = records
        .par_iter()
        .map(|(record_index, rec)| {
            let mut warnings = Vec::new();
            let img = match load_gray(&rec.path) {
                Ok(img) => img,
                Err(e) => return (Vec::new(), warnings, Some(e.to_string())),
            };
            let bank = match banks.get(&rec.image_id) {
                Some(b) => b.clone(),
                None => {
                    warnings.push(format!("{}: no bank, using full images", rec.image_id));
                    RoiBank {
                        image_id: rec.image_id.clone(),
                        source_w: img.width(),
                        source_h: img.height(),
                        boxes: Vec::new(),
                        maskless: false,
                        k: cfg.bank.k,
                        config_hash: expected_hash.clone(),
                    }
                }
            };
            if (bank.source_w, bank.source_h) != (img.width(), img.height()) {
                return (
                    Vec::new(),
                    warnings,
                    Some(format!(
                        "{}: bank is for {}x{} but image is {}x{}",
                        rec.image_id,
                        bank.source_w,
                        bank.source_h,
                        img.width(),
                        img.height()
                    )),
                );
            }
            let tissue = build_tissue_mask(&img, &cfg.mask);
            let mut rng = DrawStream::child(cfg.seed, *record_index as u64);
            let mut audit = Vec::with_capacity(args.n);
            for j in 0..args.n {
                let out = match augment_one(&img, &tissue.mask, &bank, &cfg.sampler, &mut rng) {
                    Ok(o) => o,
                    Err(e) => return (audit, warnings, Some(format!("{}: {e}", rec.image_id))),
                };
                if !args.audit_only {
                    let stem = format!("{}__{j:03}", file_stem(&rec.image_id));
                    let saved = match args.format {
                        ImageFormat::Png => save_png(&out.image, sample_dir.join(format!("{stem}.png"))),
                        ImageFormat::Pgm => save_pgm(&out.image, sample_dir.join(format!("{stem}.pgm")), BitDepth::Sixteen),
                    };
                    if let Err(e) = saved {
                        return (audit, warnings, Some(e.to_string()));
                    }
                }
                audit.push(AuditRecord {
                    image_id: rec.image_id.clone(),
                    record_index: *record_index,
                    sample_index: j,
                    seed: cfg.seed,
                    used_roi: out.used_roi,
                    bank_index: out.bank_index,
                    chosen_box: out.chosen_box,
                    retries_used: out.retries_used,
                });
            }
            (audit, warnings, None)
        })
        .collect();

    let mut log = String::new();
    let (mut n_samples, mut n_roi) = (0usize, 0usize);
    for (audit, warnings, error) in results {
        for w in warnings {
            outcome.warn(w);
        }
        if let Some(e) = error {
            outcome.error(e);
        }
        for a in audit {
            n_samples += 1;
            n_roi += a.used_roi as usize;
            writeln!(log, "{}", serde_json::to_string(&a)?)?;
        }
    }
    write_atomic(&ctx.out.join(AUDIT_FILE), log.as_bytes())?;
    write_json(
        &ctx.out.join(FIXTURE_FILE),
        &StreamFixture::generate(cfg.seed, FIXTURE_DRAWS, FIXTURE_SPLITS),
    )?;
    println!(
        "sample: {} images, {} samples, {} ROI crops (p_roi = {}, alpha = {})",
        records.len(),
        n_samples,
        n_roi,
        cfg.sampler.p_roi,
        cfg.sampler.alpha
    );
    Ok(outcome)
}
