//! Per-image ROI banks: sliding-window proposals scored by mean saliency,
//! area/aspect filtering, greedy NMS, top-K truncation and padding.
//!
//! Banks live in source-resolution coordinates. All steps are
//! deterministic so re-running over the same inputs produces byte-identical
//! bank files.

pub mod io;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{clip_to_rect, iou, BBox};
use crate::integral::IntegralImage;
use crate::raster::{GrayImage, PixelRect};
use crate::saliency::{compute_saliency, SaliencyConfig, SaliencyError, SaliencyMap};
use crate::tissue::{build_tissue_mask, tissue_bounding_rect, MaskConfig, TissueMask};

pub use io::{parse_bank_line, read_bank, read_banks, to_json_line, write_bank, write_banks};

#[derive(Debug, Error)]
pub enum BankError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("{path}:{line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Saliency(#[from] SaliencyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    #[serde(flatten)]
    pub bbox: BBox,
    pub score: f64,
}

impl ScoredBox {
    pub fn new(bbox: BBox, score: f64) -> Self {
        Self { bbox, score }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BankConfig {
    pub window_sizes: Vec<usize>,
    pub stride: usize,
    pub k: usize,
    pub nms_iou: f64,
    pub min_area_frac: f64,
    pub max_area_frac: f64,
    pub aspect_lo: f64,
    pub aspect_hi: f64,
    pub pad_scale_max: f64,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self {
            window_sizes: vec![192, 256, 320],
            stride: 64,
            k: 5,
            nms_iou: 0.5,
            min_area_frac: 0.01,
            max_area_frac: 0.20,
            aspect_lo: 0.6,
            aspect_hi: 1.6,
            pad_scale_max: 1.25,
        }
    }
}

impl BankConfig {
    pub fn validate(&self) -> Result<(), BankError> {
        let bad = |m: String| Err(BankError::Argument(m));
        if !(self.min_area_frac > 0.0 && self.min_area_frac < self.max_area_frac) {
            return bad(format!(
                "need 0 < min_area_frac < max_area_frac, got {} and {}",
                self.min_area_frac, self.max_area_frac
            ));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            return bad(format!("nms_iou must be in (0, 1), got {}", self.nms_iou));
        }
        if self.k < 1 || self.stride < 1 {
            return bad(format!("k and stride must be >= 1, got {} and {}", self.k, self.stride));
        }
        if !(self.aspect_lo <= 1.0 && 1.0 <= self.aspect_hi) {
            return bad(format!(
                "need aspect_lo <= 1 <= aspect_hi, got {} and {}",
                self.aspect_lo, self.aspect_hi
            ));
        }
        if !(self.pad_scale_max >= 1.0) {
            return bad(format!("pad_scale_max must be >= 1, got {}", self.pad_scale_max));
        }
        if self.window_sizes.iter().any(|&s| s == 0) {
            return bad("window sizes must be positive".into());
        }
        Ok(())
    }
}

/// Hex SHA-256 of the canonical JSON form of the three configs.
pub fn config_hash(mask: &MaskConfig, saliency: &SaliencyConfig, bank: &BankConfig) -> String {
    #[derive(Serialize)]
    struct Canonical<'a> {
        mask: &'a MaskConfig,
        saliency: &'a SaliencyConfig,
        bank: &'a BankConfig,
    }
    let json = serde_json::to_string(&Canonical { mask, saliency, bank })
        .expect("configs serialize");
    hex::encode(Sha256::digest(json.as_bytes()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiBank {
    pub image_id: String,
    pub source_w: usize,
    pub source_h: usize,
    /// Descending score order.
    pub boxes: Vec<ScoredBox>,
    pub maskless: bool,
    pub k: usize,
    pub config_hash: String,
}

impl RoiBank {
    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }
}

fn axis_positions(extent: usize, size: usize, stride: usize) -> Vec<usize> {
    let last = extent - size;
    let mut pos: Vec<usize> = (0..=last).step_by(stride).collect();
    if *pos.last().expect("at least position 0") != last {
        pos.push(last);
    }
    pos
}

/// Square sliding windows, size-major then row-major. The last position on
/// each axis is clamped to touch the far edge; sizes larger than the image
/// are skipped.
pub fn generate_windows(source_w: usize, source_h: usize, cfg: &BankConfig) -> Vec<BBox> {
    let mut out = Vec::new();
    for &s in &cfg.window_sizes {
        if s == 0 || s > source_w.min(source_h) {
            continue;
        }
        let xs = axis_positions(source_w, s, cfg.stride.max(1));
        let ys = axis_positions(source_h, s, cfg.stride.max(1));
        let half = s as f64 / 2.0;
        for &y in &ys {
            for &x in &xs {
                out.push(BBox::new(x as f64 + half, y as f64 + half, s as f64, s as f64));
            }
        }
    }
    out
}

/// Mean-saliency scorer backed by a summed-area table of the map.
pub struct WindowScorer {
    width: usize,
    height: usize,
    table: IntegralImage,
}

impl WindowScorer {
    pub fn new(s_map: &SaliencyMap) -> Self {
        Self {
            width: s_map.width(),
            height: s_map.height(),
            table: s_map.integral(),
        }
    }

    pub fn score(&self, b: &BBox) -> Result<f64, BankError> {
        let r = b.rasterize(self.width, self.height).ok_or_else(|| {
            BankError::Argument(format!("box {b:?} has an empty footprint"))
        })?;
        let sum = self.table.sum(r.x0, r.y0, r.x1(), r.y1());
        Ok((sum / r.area() as f64).max(0.0))
    }
}

/// Mean of the saliency map over the box's integer footprint.
pub fn score_window(s_map: &SaliencyMap, b: &BBox) -> Result<f64, BankError> {
    WindowScorer::new(s_map).score(b)
}

/// Keeps boxes whose area relative to the mask and aspect ratio fall inside
/// the configured bounds; order is preserved.
pub fn filter_proposals(cands: &[ScoredBox], mask_area: f64, cfg: &BankConfig) -> Vec<ScoredBox> {
    if !(mask_area > 0.0) {
        return Vec::new();
    }
    cands
        .iter()
        .filter(|c| {
            let frac = c.bbox.area() / mask_area;
            let aspect = c.bbox.aspect();
            frac >= cfg.min_area_frac
                && frac <= cfg.max_area_frac
                && aspect >= cfg.aspect_lo
                && aspect <= cfg.aspect_hi
        })
        .copied()
        .collect()
}

/// Rank order: higher score first, then smaller `cy`, `cx`, `w`.
pub fn rank_order(a: &ScoredBox, b: &ScoredBox) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.bbox.cy.total_cmp(&b.bbox.cy))
        .then(a.bbox.cx.total_cmp(&b.bbox.cx))
        .then(a.bbox.w.total_cmp(&b.bbox.w))
}

/// Greedy NMS: boxes with IoU strictly above `iou_thresh` against an
/// already-kept, better-ranked box are suppressed.
pub fn nms(cands: &[ScoredBox], iou_thresh: f64) -> Vec<ScoredBox> {
    let mut order = cands.to_vec();
    order.sort_by(rank_order);
    let mut kept: Vec<ScoredBox> = Vec::new();
    for c in order {
        if kept.iter().all(|k| iou(&k.bbox, &c.bbox) <= iou_thresh) {
            kept.push(c);
        }
    }
    kept
}

/// IoU above which a padding candidate counts as a duplicate.
const PAD_DUPLICATE_IOU: f64 = 0.95;

/// Pads a short bank with enlarged copies of the best box (factors 1.05,
/// 1.10, ... up to `pad_scale_max`), each clipped to `mask_rect` and
/// dropped when it duplicates an existing box.
pub fn pad_bank(kept: &[ScoredBox], mask_rect: PixelRect, cfg: &BankConfig) -> Result<Vec<ScoredBox>, BankError> {
    let best = *kept
        .first()
        .ok_or_else(|| BankError::Argument("cannot pad an empty bank".into()))?;
    let mut out = kept.to_vec();
    let mut step = 1;
    while out.len() < cfg.k {
        let factor = 1.0 + 0.05 * step as f64;
        if factor > cfg.pad_scale_max + 1e-9 {
            break;
        }
        step += 1;
        let cand = clip_to_rect(&best.bbox.scaled(factor), mask_rect);
        if out.iter().any(|b| iou(&b.bbox, &cand) > PAD_DUPLICATE_IOU) {
            continue;
        }
        out.push(ScoredBox::new(cand, best.score));
    }
    Ok(out)
}

/// Intermediate products of one bank run, kept for inspection tools.
pub struct BankRun {
    pub bank: RoiBank,
    pub tissue: TissueMask,
    pub saliency: Option<SaliencyMap>,
}

/// Mask, saliency, windows, scoring, filtering, NMS, top-K and padding.
pub fn build_bank(
    img: &GrayImage,
    image_id: &str,
    mask_cfg: &MaskConfig,
    sal_cfg: &SaliencyConfig,
    bank_cfg: &BankConfig,
) -> Result<RoiBank, BankError> {
    Ok(build_bank_detailed(img, image_id, mask_cfg, sal_cfg, bank_cfg)?.bank)
}

pub fn build_bank_detailed(
    img: &GrayImage,
    image_id: &str,
    mask_cfg: &MaskConfig,
    sal_cfg: &SaliencyConfig,
    bank_cfg: &BankConfig,
) -> Result<BankRun, BankError> {
    bank_cfg.validate()?;
    mask_cfg
        .validate()
        .map_err(|e| BankError::Argument(e.to_string()))?;
    sal_cfg.validate()?;
    let (w, h) = (img.width(), img.height());
    let mut bank = RoiBank {
        image_id: image_id.to_string(),
        source_w: w,
        source_h: h,
        boxes: Vec::new(),
        maskless: false,
        k: bank_cfg.k,
        config_hash: config_hash(mask_cfg, sal_cfg, bank_cfg),
    };

    let tissue = build_tissue_mask(img, mask_cfg);
    if tissue.maskless {
        bank.maskless = true;
        return Ok(BankRun {
            bank,
            tissue,
            saliency: None,
        });
    }
    let s_map = compute_saliency(img, &tissue.mask, sal_cfg)?;
    let scorer = WindowScorer::new(&s_map);
    let mut cands = Vec::new();
    for win in generate_windows(w, h, bank_cfg) {
        cands.push(ScoredBox::new(win, scorer.score(&win)?));
    }
    let mask_area = tissue.mask.count() as f64;
    let filtered = filter_proposals(&cands, mask_area, bank_cfg);
    let mut kept = nms(&filtered, bank_cfg.nms_iou);
    kept.truncate(bank_cfg.k);
    if !kept.is_empty() && kept.len() < bank_cfg.k {
        let rect = tissue_bounding_rect(&tissue.mask).expect("mask is non-empty");
        kept = pad_bank(&kept, rect, bank_cfg)?;
    }
    bank.boxes = kept;
    Ok(BankRun {
        bank,
        tissue,
        saliency: Some(s_map),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DrawStream;

    fn sb(cx: f64, cy: f64, w: f64, h: f64, score: f64) -> ScoredBox {
        ScoredBox::new(BBox::new(cx, cy, w, h), score)
    }

    #[test]
    fn window_counts() {
        let one = BankConfig {
            window_sizes: vec![192],
            ..BankConfig::default()
        };
        assert_eq!(generate_windows(640, 640, &one).len(), 64);
        assert!(generate_windows(100, 100, &BankConfig::default()).is_empty());
        assert_eq!(generate_windows(640, 640, &BankConfig::default()).len(), 64 + 49 + 36);
    }

    #[test]
    fn last_window_touches_far_edge() {
        let cfg = BankConfig {
            window_sizes: vec![192],
            ..BankConfig::default()
        };
        let wins = generate_windows(500, 300, &cfg);
        let max_right = wins.iter().map(|b| b.right()).fold(0.0, f64::max);
        let max_bottom = wins.iter().map(|b| b.bottom()).fold(0.0, f64::max);
        assert_eq!((max_right, max_bottom), (500.0, 300.0));
        // x: 0,64,128,192,256,308 ; y: 0,64,108
        assert_eq!(wins.len(), 6 * 3);
    }

    #[test]
    fn window_scores() {
        let zero = SaliencyMap::new(8, 8, vec![0.0; 64]).unwrap();
        assert_eq!(score_window(&zero, &BBox::new(4.0, 4.0, 4.0, 4.0)).unwrap(), 0.0);
        let flat = SaliencyMap::new(8, 8, vec![0.4; 64]).unwrap();
        assert!((score_window(&flat, &BBox::new(3.0, 5.0, 2.0, 4.0)).unwrap() - 0.4).abs() < 1e-15);
        assert!(score_window(&flat, &BBox::new(-20.0, 4.0, 2.0, 2.0)).is_err());
    }

    #[test]
    fn window_scores_match_naive_sums() {
        let mut s = DrawStream::new(11);
        let vals: Vec<f64> = (0..16 * 16).map(|_| s.next_f64()).collect();
        let map = SaliencyMap::new(16, 16, vals.clone()).unwrap();
        let scorer = WindowScorer::new(&map);
        for _ in 0..200 {
            let (x0, y0) = (s.index(15), s.index(15));
            let (w, h) = (1 + s.index(16 - x0), 1 + s.index(16 - y0));
            let b = BBox::new(x0 as f64 + w as f64 / 2.0, y0 as f64 + h as f64 / 2.0, w as f64, h as f64);
            let mut sum = 0.0;
            for y in y0..y0 + h {
                for x in x0..x0 + w {
                    sum += vals[y * 16 + x];
                }
            }
            assert!((scorer.score(&b).unwrap() - sum / (w * h) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn area_filter_thresholds() {
        let cfg = BankConfig::default();
        let b = [sb(96.0, 96.0, 192.0, 192.0, 1.0)];
        assert!(filter_proposals(&b, 100_000.0, &cfg).is_empty());
        assert_eq!(filter_proposals(&b, 400_000.0, &cfg).len(), 1);
        let wide = [sb(50.0, 50.0, 100.0, 50.0, 1.0)];
        assert!(filter_proposals(&wide, 100_000.0, &cfg).is_empty());
    }

    #[test]
    fn nms_basic_cases() {
        let one = [sb(5.0, 5.0, 4.0, 4.0, 0.3)];
        assert_eq!(nms(&one, 0.5), one.to_vec());
        // overlap 7.5x10 / (100 + 100 - 75) = 0.6
        let a = sb(10.0, 10.0, 10.0, 10.0, 0.9);
        let b = sb(12.5, 10.0, 10.0, 10.0, 0.8);
        assert!((iou(&a.bbox, &b.bbox) - 0.6).abs() < 1e-12);
        assert_eq!(nms(&[b, a], 0.5), vec![a]);
    }

    #[test]
    fn nms_ties_break_by_position() {
        let a = sb(20.0, 10.0, 10.0, 10.0, 0.5);
        let b = sb(10.0, 10.0, 10.0, 10.0, 0.5);
        let c = sb(10.0, 5.0, 10.0, 10.0, 0.5);
        let out = nms(&[a, b, c], 0.99);
        assert_eq!(out, vec![c, b, a]);
    }

    #[test]
    fn pad_full_bank_is_unchanged() {
        let cfg = BankConfig::default();
        let kept: Vec<_> = (0..5).map(|i| sb(100.0 + 200.0 * i as f64, 100.0, 50.0, 50.0, 1.0 - 0.1 * i as f64)).collect();
        assert_eq!(pad_bank(&kept, PixelRect::new(0, 0, 2000, 400), &cfg).unwrap(), kept);
    }

    #[test]
    fn pad_appends_first_scale() {
        let cfg = BankConfig::default();
        let kept: Vec<_> = (0..4).map(|i| sb(200.0 + 300.0 * i as f64, 300.0, 100.0, 100.0, 0.9 - 0.1 * i as f64)).collect();
        let out = pad_bank(&kept, PixelRect::new(0, 0, 1500, 600), &cfg).unwrap();
        assert_eq!(out.len(), 5);
        let added = out[4];
        assert!((added.bbox.w - 105.0).abs() < 1e-9);
        assert_eq!(added.bbox.cx, 200.0);
        assert_eq!(added.score, 0.9);
        assert!((iou(&kept[0].bbox, &added.bbox) - 1.0 / 1.1025).abs() < 1e-12);
    }

    #[test]
    fn pad_spanning_box_stays_single() {
        let cfg = BankConfig::default();
        let rect = PixelRect::new(10, 20, 200, 200);
        let kept = [sb(110.0, 120.0, 200.0, 200.0, 0.7)];
        assert_eq!(pad_bank(&kept, rect, &cfg).unwrap(), kept.to_vec());
        assert!(pad_bank(&[], rect, &cfg).is_err());
    }

    #[test]
    fn black_image_gives_maskless_bank() {
        let img = GrayImage::filled(400, 400, 0.0);
        let bank = build_bank(&img, "black", &MaskConfig::default(), &SaliencyConfig::default(), &BankConfig::default()).unwrap();
        assert!(bank.maskless);
        assert!(bank.boxes.is_empty());
    }

    #[test]
    fn config_hash_tracks_changes() {
        let (m, s, b) = (MaskConfig::default(), SaliencyConfig::default(), BankConfig::default());
        let h0 = config_hash(&m, &s, &b);
        assert_eq!(h0.len(), 64);
        assert_eq!(h0, config_hash(&m, &s, &b));
        let b2 = BankConfig { k: 6, ..b };
        assert_ne!(h0, config_hash(&m, &s, &b2));
    }
}
