//! Tissue masking: Otsu binarization, small-component removal and disc
//! closing, plus the tight tissue rectangle used for preprocessing crops.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{GrayImage, PixelRect};

#[derive(Debug, Error, PartialEq)]
pub enum TissueError {
    #[error("degenerate histogram: all intensities fall in a single bin")]
    DegenerateHistogram,
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("invalid argument: {0}")]
    Argument(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, TissueError> {
        if bits.len() != width * height {
            return Err(TissueError::Argument(format!(
                "mask length {} does not match {width}x{height}",
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// 0/1 image for PGM export.
    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            if self.get(x, y) {
                1.0
            } else {
                0.0
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskConfig {
    pub min_component_frac: f64,
    pub closing_radius: usize,
    pub histogram_bins: usize,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            min_component_frac: 0.005,
            closing_radius: 7,
            histogram_bins: 256,
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<(), TissueError> {
        if !(self.min_component_frac > 0.0 && self.min_component_frac < 1.0) {
            return Err(TissueError::Argument(format!(
                "min_component_frac must be in (0, 1), got {}",
                self.min_component_frac
            )));
        }
        if self.histogram_bins < 2 {
            return Err(TissueError::Argument(format!(
                "histogram_bins must be >= 2, got {}",
                self.histogram_bins
            )));
        }
        Ok(())
    }
}

/// Bin `k` covers `(k/bins, (k+1)/bins]`; bin 0 also holds 0. With this
/// layout "bin >= k" and "value > k/bins" select the same pixels.
/// Bin `k` holds `(k/bins, (k+1)/bins]`, i.e. `ceil(v * bins) - 1`, with
/// out-of-range values clamped to the end bins.
#[inline]
fn bin_of(v: f64, bins: usize) -> usize {
    let x = v * bins as f64;
    // truncation instead of `ceil`, which is a library call on baseline x86-64
    let t = x as i64;
    let k = if t as f64 == x { t - 1 } else { t };
    k.clamp(0, bins as i64 - 1) as usize
}

/// Otsu threshold over a `bins`-bin histogram. Pixels strictly above the
/// returned value are foreground. Among equally good cuts the lowest wins.
pub fn otsu_threshold(img: &GrayImage, bins: usize) -> Result<f64, TissueError> {
    if bins < 2 {
        return Err(TissueError::Argument(format!("bins must be >= 2, got {bins}")));
    }
    let mut hist = vec![0u64; bins];
    for &v in img.data() {
        hist[bin_of(v, bins)] += 1;
    }
    let total = img.data().len() as f64;
    let center = |k: usize| (k as f64 + 0.5) / bins as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(k, &c)| c as f64 * center(k)).sum();

    let mut best: Option<(usize, f64)> = None;
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    for k in 1..bins {
        w0 += hist[k - 1] as f64;
        sum0 += hist[k - 1] as f64 * center(k - 1);
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if best.map_or(true, |(_, b)| between > b) {
            best = Some((k, between));
        }
    }
    best.map(|(k, _)| k as f64 / bins as f64)
        .ok_or(TissueError::DegenerateHistogram)
}

pub fn binarize(img: &GrayImage, threshold: f64) -> BinaryMask {
    BinaryMask {
        width: img.width(),
        height: img.height(),
        bits: img.data().iter().map(|&v| v > threshold).collect(),
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Clears 8-connected foreground components smaller than
/// `min_frac * width * height` pixels.
///
/// Works on horizontal runs: runs in adjacent rows are joined when their
/// column spans touch or overlap diagonally.
pub fn remove_small_components(mask: &BinaryMask, min_frac: f64) -> BinaryMask {
    let (w, h) = (mask.width, mask.height);
    let min_pixels = min_frac * (w * h) as f64;
    // (row, start, end) with `end` exclusive
    let mut runs: Vec<(usize, usize, usize)> = Vec::new();
    let mut row_start = Vec::with_capacity(h + 1);
    for y in 0..h {
        row_start.push(runs.len());
        let row = &mask.bits[y * w..(y + 1) * w];
        let mut x = 0;
        while x < w {
            if row[x] {
                let s = x;
                while x < w && row[x] {
                    x += 1;
                }
                runs.push((y, s, x));
            } else {
                x += 1;
            }
        }
    }
    row_start.push(runs.len());

    let mut parent: Vec<usize> = (0..runs.len()).collect();
    for y in 1..h {
        let (mut i, i_end) = (row_start[y - 1], row_start[y]);
        let (mut j, j_end) = (row_start[y], row_start[y + 1]);
        while i < i_end && j < j_end {
            let (_, a0, a1) = runs[i];
            let (_, b0, b1) = runs[j];
            // 8-connectivity: spans touch when a0 <= b1 and b0 <= a1
            if a0 <= b1 && b0 <= a1 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
            if a1 < b1 {
                i += 1;
            } else {
                j += 1;
            }
        }
    }
    let mut size = vec![0usize; runs.len()];
    for k in 0..runs.len() {
        let root = find(&mut parent, k);
        size[root] += runs[k].2 - runs[k].1;
    }
    let mut out = mask.clone();
    for k in 0..runs.len() {
        let root = find(&mut parent, k);
        if (size[root] as f64) < min_pixels {
            let (y, s, e) = runs[k];
            out.bits[y * w + s..y * w + e].fill(false);
        }
    }
    out
}

/// Half-widths of the disc `dx^2 + dy^2 <= r^2`, indexed by `|dy|`.
fn disc_half_widths(radius: usize) -> Vec<usize> {
    let r2 = radius * radius;
    (0..=radius)
        .map(|dy| {
            let rem = r2 - dy * dy;
            let mut k = (rem as f64).sqrt() as usize;
            while k * k > rem {
                k -= 1;
            }
            while (k + 1) * (k + 1) <= rem {
                k += 1;
            }
            k
        })
        .collect()
}

/// Marks every pixel whose disc contains an in-image pixel equal to
/// `target`, painting each run of `target` pixels widened by the disc's
/// half-width into the rows it reaches.
fn disc_reach(mask: &BinaryMask, radius: usize, target: bool) -> Vec<bool> {
    let (w, h) = (mask.width, mask.height);
    let hw = disc_half_widths(radius);
    let mut out = vec![false; w * h];
    for sy in 0..h {
        let row = &mask.bits[sy * w..(sy + 1) * w];
        let mut x = 0;
        while x < w {
            if row[x] != target {
                x += 1;
                continue;
            }
            let s = x;
            while x < w && row[x] == target {
                x += 1;
            }
            let ty0 = sy.saturating_sub(radius);
            let ty1 = (sy + radius).min(h - 1);
            for ty in ty0..=ty1 {
                let reach = hw[ty.abs_diff(sy)];
                let lo = s.saturating_sub(reach);
                let hi = (x + reach).min(w);
                out[ty * w + lo..ty * w + hi].fill(true);
            }
        }
    }
    out
}

/// Disc dilation; pixels outside the image never contribute foreground.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    BinaryMask {
        width: mask.width,
        height: mask.height,
        bits: disc_reach(mask, radius, true),
    }
}

/// Disc erosion, the adjoint of [`dilate`]: a pixel survives when every
/// in-image pixel of its disc is foreground.
pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let mut bits = disc_reach(mask, radius, false);
    for b in bits.iter_mut() {
        *b = !*b;
    }
    BinaryMask {
        width: mask.width,
        height: mask.height,
        bits,
    }
}

/// Dilation followed by erosion with the disc of the given radius.
pub fn morphological_close(mask: &BinaryMask, radius: usize) -> BinaryMask {
    erode(&dilate(mask, radius), radius)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TissueMask {
    pub mask: BinaryMask,
    /// Set when no tissue could be segmented (degenerate histogram or
    /// nothing left after cleanup).
    pub maskless: bool,
}

pub fn build_tissue_mask(img: &GrayImage, cfg: &MaskConfig) -> TissueMask {
    let (w, h) = (img.width(), img.height());
    let threshold = match otsu_threshold(img, cfg.histogram_bins) {
        Ok(t) => t,
        Err(_) => {
            return TissueMask {
                mask: BinaryMask::empty(w, h),
                maskless: true,
            }
        }
    };
    let raw = binarize(img, threshold);
    let cleaned = remove_small_components(&raw, cfg.min_component_frac);
    let mask = morphological_close(&cleaned, cfg.closing_radius);
    let maskless = mask.is_empty();
    TissueMask { mask, maskless }
}

/// Tightest rectangle containing every foreground pixel.
pub fn tissue_bounding_rect(mask: &BinaryMask) -> Result<PixelRect, TissueError> {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..mask.height {
        let row = &mask.bits[y * mask.width..(y + 1) * mask.width];
        let (Some(first), Some(last)) = (row.iter().position(|&b| b), row.iter().rposition(|&b| b))
        else {
            continue;
        };
        x0 = x0.min(first);
        x1 = x1.max(last);
        y0 = y0.min(y);
        y1 = y;
    }
    if x0 == usize::MAX {
        return Err(TissueError::EmptyMask);
    }
    Ok(PixelRect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
}
