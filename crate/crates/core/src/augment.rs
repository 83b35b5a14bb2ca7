//! Training-time ROI replacement.
//!
//! With probability `p_roi` an image is replaced by a jittered crop drawn
//! from its ROI bank; otherwise the tissue-cropped full image is used. Both
//! paths are resized to `out_size x out_size`.
//!
//! Draws are taken from a [`DrawStream`] in a fixed order: the replacement
//! uniform, then per attempt the bank index followed by `eps_w, eps_h,
//! eps_x, eps_y`. Every draw is consumed even when `alpha` is zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{clip_box, BBox};
use crate::raster::{crop, resize_bilinear, GrayImage, RasterError};
use crate::rng::DrawStream;
use crate::roibank::RoiBank;
use crate::tissue::{tissue_bounding_rect, BinaryMask};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("evaluation record {index} ({image_id}) carries an ROI crop")]
    RoiInEvaluation { index: usize, image_id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub p_roi: f64,
    pub alpha: f64,
    pub out_size: usize,
    pub min_tissue_overlap: f64,
    pub max_retries: usize,
    /// Filled from the run-level seed; not part of the sampler section.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            p_roi: 0.10,
            alpha: 0.10,
            out_size: 640,
            min_tissue_overlap: 0.5,
            max_retries: 5,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(0.0..=1.0).contains(&self.p_roi) {
            return Err(AugmentError::Argument(format!("p_roi must be in [0, 1], got {}", self.p_roi)));
        }
        if !(self.alpha >= 0.0 && self.alpha < 1.0) {
            return Err(AugmentError::Argument(format!("alpha must be in [0, 1), got {}", self.alpha)));
        }
        if self.out_size < 1 {
            return Err(AugmentError::Argument("out_size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.min_tissue_overlap) {
            return Err(AugmentError::Argument(format!(
                "min_tissue_overlap must be in [0, 1], got {}",
                self.min_tissue_overlap
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOutcome {
    pub image: GrayImage,
    pub used_roi: bool,
    /// Post-jitter, post-clip box; absent on the full-image path.
    pub chosen_box: Option<BBox>,
    /// Bank index of the accepted draw, or of the fallback best box.
    pub bank_index: Option<usize>,
    pub retries_used: usize,
}

/// Perturbs scale and center by independent `Uniform(-alpha, alpha)` draws
/// (`eps_w, eps_h, eps_x, eps_y` in that order). Not clipped.
pub fn jitter_box(b: &BBox, alpha: f64, rng: &mut DrawStream) -> BBox {
    let eps_w = rng.uniform(-alpha, alpha);
    let eps_h = rng.uniform(-alpha, alpha);
    let eps_x = rng.uniform(-alpha, alpha);
    let eps_y = rng.uniform(-alpha, alpha);
    if alpha == 0.0 {
        return *b;
    }
    BBox::new(
        b.cx + eps_x * b.w,
        b.cy + eps_y * b.h,
        b.w * (1.0 + eps_w),
        b.h * (1.0 + eps_h),
    )
}

/// Fraction of the box footprint covered by mask pixels.
pub fn tissue_overlap(b: &BBox, mask: &BinaryMask) -> Result<f64, AugmentError> {
    let r = b
        .rasterize(mask.width(), mask.height())
        .ok_or_else(|| AugmentError::Argument(format!("box {b:?} has an empty footprint")))?;
    let mut hits = 0usize;
    for y in r.y0..r.y1() {
        let row = &mask.bits()[y * mask.width() + r.x0..y * mask.width() + r.x1()];
        hits += row.iter().filter(|&&m| m).count();
    }
    Ok(hits as f64 / r.area() as f64)
}

fn crop_resized(img: &GrayImage, b: &BBox, out_size: usize) -> Result<GrayImage, AugmentError> {
    let rect = b
        .rasterize(img.width(), img.height())
        .ok_or_else(|| AugmentError::Argument(format!("box {b:?} has an empty footprint")))?;
    Ok(resize_bilinear(&crop(img, rect)?, out_size, out_size)?)
}

/// Draws an ROI crop from a non-empty bank, redrawing index and jitter
/// while tissue overlap is below the configured minimum.
pub fn sample_roi_crop(
    img: &GrayImage,
    mask: &BinaryMask,
    bank: &RoiBank,
    cfg: &SamplerConfig,
    rng: &mut DrawStream,
) -> Result<AugmentOutcome, AugmentError> {
    if bank.boxes.is_empty() {
        return Err(AugmentError::Argument(format!(
            "bank for {} is empty; use the full-image path",
            bank.image_id
        )));
    }
    let (w, h) = (img.width(), img.height());
    for attempt in 0..=cfg.max_retries {
        let index = rng.index(bank.boxes.len());
        let jittered = jitter_box(&bank.boxes[index].bbox, cfg.alpha, rng);
        let clipped = clip_box(&jittered, w, h);
        let ok = match tissue_overlap(&clipped, mask) {
            Ok(frac) => frac >= cfg.min_tissue_overlap,
            Err(_) => false,
        };
        if ok {
            return Ok(AugmentOutcome {
                image: crop_resized(img, &clipped, cfg.out_size)?,
                used_roi: true,
                chosen_box: Some(clipped),
                bank_index: Some(index),
                retries_used: attempt,
            });
        }
    }
    let best = clip_box(&bank.boxes[0].bbox, w, h);
    Ok(AugmentOutcome {
        image: crop_resized(img, &best, cfg.out_size)?,
        used_roi: true,
        chosen_box: Some(best),
        bank_index: Some(0),
        retries_used: cfg.max_retries,
    })
}

/// Full-image path: tissue-rect crop (when a mask exists), then resize.
pub fn full_image_view(img: &GrayImage, mask: &BinaryMask, out_size: usize) -> Result<AugmentOutcome, AugmentError> {
    let base = match tissue_bounding_rect(mask) {
        Ok(rect) => crop(img, rect)?,
        Err(_) => img.clone(),
    };
    Ok(AugmentOutcome {
        image: resize_bilinear(&base, out_size, out_size)?,
        used_roi: false,
        chosen_box: None,
        bank_index: None,
        retries_used: 0,
    })
}

/// One training sample: ROI crop with probability `p_roi` (non-empty banks
/// only), otherwise the full image.
pub fn augment_one(
    img: &GrayImage,
    mask: &BinaryMask,
    bank: &RoiBank,
    cfg: &SamplerConfig,
    rng: &mut DrawStream,
) -> Result<AugmentOutcome, AugmentError> {
    let u = rng.next_f64();
    if u < cfg.p_roi && !bank.boxes.is_empty() {
        sample_roi_crop(img, mask, bank, cfg, rng)
    } else {
        full_image_view(img, mask, cfg.out_size)
    }
}

/// Validation and test inputs never see ROI replacement.
pub fn check_eval_purity<'a, I>(records: I) -> Result<(), AugmentError>
where
    I: IntoIterator<Item = (&'a str, &'a AugmentOutcome)>,
{
    for (index, (image_id, outcome)) in records.into_iter().enumerate() {
        if outcome.used_roi {
            return Err(AugmentError::RoiInEvaluation {
                index,
                image_id: image_id.to_string(),
            });
        }
    }
    Ok(())
}
