//! Saliency: a blend of local intensity variance and Laplacian-of-Gaussian
//! energy, restricted to the tissue mask.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integral::{box_sums, reflect_pad_region, IntegralImage};
use crate::raster::{GrayImage, PixelRect};
use crate::tissue::{tissue_bounding_rect, BinaryMask};

#[derive(Debug, Error, PartialEq)]
pub enum SaliencyError {
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// Components whose range over the mask is at most this are treated as
/// constant and contribute zero.
const FLAT_RANGE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, SaliencyError> {
        if values.len() != width * height {
            return Err(SaliencyError::Argument(format!(
                "value count {} does not match {width}x{height}",
                values.len()
            )));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(SaliencyError::Argument("saliency values must be non-negative".into()));
        }
        Ok(Self { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn integral(&self) -> IntegralImage {
        IntegralImage::new(self.width, self.height, &self.values)
    }

    /// Rescales by the map maximum into a displayable image.
    pub fn to_image(&self) -> GrayImage {
        let max = self.values.iter().copied().fold(0.0, f64::max);
        let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
        GrayImage::from_fn(self.width, self.height, |x, y| self.get(x, y) * scale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaliencyConfig {
    pub lambda_blend: f64,
    pub var_window: usize,
    pub log_sigma: f64,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        Self {
            lambda_blend: 0.6,
            var_window: 31,
            log_sigma: 1.5,
        }
    }
}

impl SaliencyConfig {
    pub fn validate(&self) -> Result<(), SaliencyError> {
        check_window(self.var_window)?;
        check_sigma(self.log_sigma)?;
        if !(0.0..=1.0).contains(&self.lambda_blend) {
            return Err(SaliencyError::Argument(format!(
                "lambda_blend must be in [0, 1], got {}",
                self.lambda_blend
            )));
        }
        Ok(())
    }
}

fn check_window(window: usize) -> Result<(), SaliencyError> {
    if window < 3 || window % 2 == 0 {
        return Err(SaliencyError::Argument(format!(
            "variance window must be odd and >= 3, got {window}"
        )));
    }
    Ok(())
}

fn check_sigma(sigma: f64) -> Result<(), SaliencyError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(SaliencyError::Argument(format!("sigma must be positive, got {sigma}")));
    }
    Ok(())
}

/// Population variance over the centered `window x window` neighborhood,
/// reflect-padded, from sliding sums of `x` and `x^2`.
pub fn local_variance(img: &GrayImage, window: usize) -> Result<SaliencyMap, SaliencyError> {
    check_window(window)?;
    Ok(SaliencyMap {
        width: img.width(),
        height: img.height(),
        values: variance_in(img, img.full_rect(), window),
    })
}

/// Mean of the samples in `rect`; subtracting it keeps squared sums small.
fn region_mean(img: &GrayImage, rect: PixelRect) -> f64 {
    let mut s = 0.0;
    for y in rect.y0..rect.y1() {
        s += img.data()[y * img.width() + rect.x0..y * img.width() + rect.x1()]
            .iter()
            .sum::<f64>();
    }
    s / rect.area() as f64
}

fn variance_in(img: &GrayImage, rect: PixelRect, window: usize) -> Vec<f64> {
    let r = window / 2;
    let shift = region_mean(img, rect);
    let padded = reflect_pad_region(img.data(), img.width(), img.height(), rect, r, shift);
    let squares: Vec<f64> = padded.iter().map(|v| v * v).collect();
    let (pw, ph) = (rect.w + 2 * r, rect.h + 2 * r);
    let sum = box_sums(&padded, pw, ph, window);
    let sq = box_sums(&squares, pw, ph, window);
    let n = (window * window) as f64;
    sum.iter()
        .zip(&sq)
        .map(|(&s, &s2)| {
            let m = s / n;
            (s2 / n - m * m).max(0.0)
        })
        .collect()
}

/// 1-D factors of the LoG kernel: `g(t) = exp(-t^2 / 2s^2)` and its second
/// derivative up to the common factor, `(t^2 - s^2) / s^4 * g(t)`.
fn log_factors(sigma: f64, radius: usize) -> (Vec<f64>, Vec<f64>) {
    let s2 = sigma * sigma;
    let g: Vec<f64> = (0..=radius)
        .map(|t| (-((t * t) as f64) / (2.0 * s2)).exp())
        .collect();
    let g2 = g
        .iter()
        .enumerate()
        .map(|(t, &gt)| ((t * t) as f64 - s2) / (s2 * s2) * gt)
        .collect();
    (g, g2)
}

/// Truncation radius of the LoG kernel.
pub fn log_radius(sigma: f64) -> usize {
    (3.0 * sigma).ceil() as usize
}

/// Squared response to the zero-mean LoG kernel of scale `sigma`,
/// truncated at radius `ceil(3 sigma)`, reflect-padded.
///
/// The kernel `(x^2 + y^2 - 2s^2) / (2 pi s^6) * exp(-(x^2 + y^2) / 2s^2)`
/// splits into `g''(x) g(y) + g(x) g''(y)`, so it runs as two separable
/// passes; the mean correction is a box sum from a summed-area table.
pub fn log_energy(img: &GrayImage, sigma: f64) -> Result<SaliencyMap, SaliencyError> {
    check_sigma(sigma)?;
    Ok(SaliencyMap {
        width: img.width(),
        height: img.height(),
        values: log_energy_in(img, img.full_rect(), sigma),
    })
}

fn log_energy_in(img: &GrayImage, rect: PixelRect, sigma: f64) -> Vec<f64> {
    let (w, h) = (rect.w, rect.h);
    let r = log_radius(sigma);
    let side = 2 * r + 1;
    let (g, g2) = log_factors(sigma, r);
    let norm = 1.0 / (2.0 * std::f64::consts::PI * sigma * sigma);

    // Mean of the truncated kernel, removed so constant input maps to zero.
    let full = |v: &[f64]| v[0] + 2.0 * v[1..].iter().sum::<f64>();
    let kernel_sum = norm * 2.0 * full(&g2) * full(&g);
    let kernel_mean = kernel_sum / (side * side) as f64;

    // the corrected kernel ignores offsets, so center the data for precision
    let shift = region_mean(img, rect);
    let padded = reflect_pad_region(img.data(), img.width(), img.height(), rect, r, shift);
    let pw = w + 2 * r;
    let ph = h + 2 * r;

    // Horizontal pass over every padded row, output columns 0..w.
    let mut hg = vec![0.0; ph * w];
    let mut hg2 = vec![0.0; ph * w];
    for y in 0..ph {
        let row = &padded[y * pw..(y + 1) * pw];
        let out_g = &mut hg[y * w..(y + 1) * w];
        let out_g2 = &mut hg2[y * w..(y + 1) * w];
        for ((a, b), &c) in out_g.iter_mut().zip(out_g2.iter_mut()).zip(&row[r..r + w]) {
            *a = g[0] * c;
            *b = g2[0] * c;
        }
        for k in 1..=r {
            let left = &row[r - k..r - k + w];
            let right = &row[r + k..r + k + w];
            let (ck, ck2) = (g[k], g2[k]);
            for (((a, b), &lv), &rv) in out_g.iter_mut().zip(out_g2.iter_mut()).zip(left).zip(right) {
                let pair = lv + rv;
                *a += ck * pair;
                *b += ck2 * pair;
            }
        }
    }

    // Vertical pass: g''(y) on the g-filtered rows plus g(y) on the
    // g''-filtered rows, in column blocks that stay in L1.
    const BLOCK: usize = 128;
    let mut resp = vec![0.0; w * h];
    for y in 0..h {
        let c = y + r;
        for x0 in (0..w).step_by(BLOCK) {
            let x1 = (x0 + BLOCK).min(w);
            let out = &mut resp[y * w + x0..y * w + x1];
            let a = &hg[c * w + x0..c * w + x1];
            let b = &hg2[c * w + x0..c * w + x1];
            for ((o, &av), &bv) in out.iter_mut().zip(a).zip(b) {
                *o = g2[0] * av + g[0] * bv;
            }
            for k in 1..=r {
                let (cg, cg2) = (g[k], g2[k]);
                let (up, dn) = ((c - k) * w, (c + k) * w);
                let au = &hg[up + x0..up + x1];
                let ad = &hg[dn + x0..dn + x1];
                let bu = &hg2[up + x0..up + x1];
                let bd = &hg2[dn + x0..dn + x1];
                for ((((o, &a1), &a2), &b1), &b2) in out.iter_mut().zip(au).zip(ad).zip(bu).zip(bd) {
                    *o += cg2 * (a1 + a2) + cg * (b1 + b2);
                }
            }
        }
    }

    let boxes = box_sums(&padded, pw, ph, side);
    resp.iter()
        .zip(&boxes)
        .map(|(&v, &b)| {
            let v = norm * v - kernel_mean * b;
            v * v
        })
        .collect()
}

fn normalized_over_mask(values: &[f64], mask: &[bool]) -> Vec<f64> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (&v, &m) in values.iter().zip(mask) {
        if m {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let range = hi - lo;
    if !(range > FLAT_RANGE) {
        return vec![0.0; values.len()];
    }
    values
        .iter()
        .zip(mask)
        .map(|(&v, &m)| if m { ((v - lo) / range).clamp(0.0, 1.0) } else { 0.0 })
        .collect()
}

/// Min-max normalizes each component over mask pixels, mixes them with
/// weight `lambda_blend` on the variance term, and zeroes non-mask pixels.
pub fn blend_saliency(
    var_map: &SaliencyMap,
    log_map: &SaliencyMap,
    mask: &BinaryMask,
    lambda_blend: f64,
) -> Result<SaliencyMap, SaliencyError> {
    let dims = (var_map.width, var_map.height);
    if (log_map.width, log_map.height) != dims || (mask.width(), mask.height()) != dims {
        return Err(SaliencyError::Argument(format!(
            "dimension mismatch: variance {}x{}, LoG {}x{}, mask {}x{}",
            var_map.width,
            var_map.height,
            log_map.width,
            log_map.height,
            mask.width(),
            mask.height()
        )));
    }
    if !(0.0..=1.0).contains(&lambda_blend) {
        return Err(SaliencyError::Argument(format!(
            "lambda_blend must be in [0, 1], got {lambda_blend}"
        )));
    }
    let v = normalized_over_mask(&var_map.values, mask.bits());
    let e = normalized_over_mask(&log_map.values, mask.bits());
    let values = v
        .iter()
        .zip(&e)
        .zip(mask.bits())
        .map(|((&v, &e), &m)| {
            if m {
                lambda_blend * v + (1.0 - lambda_blend) * e
            } else {
                0.0
            }
        })
        .collect();
    Ok(SaliencyMap {
        width: dims.0,
        height: dims.1,
        values,
    })
}

/// Full saliency for one image and its tissue mask.
///
/// Only the mask's bounding rectangle is filtered; everything outside it is
/// zero in the blend anyway.
pub fn compute_saliency(
    img: &GrayImage,
    mask: &BinaryMask,
    cfg: &SaliencyConfig,
) -> Result<SaliencyMap, SaliencyError> {
    cfg.validate()?;
    let (w, h) = (img.width(), img.height());
    if (mask.width(), mask.height()) != (w, h) {
        return Err(SaliencyError::Argument(format!(
            "dimension mismatch: image {w}x{h}, mask {}x{}",
            mask.width(),
            mask.height()
        )));
    }
    let Ok(rect) = tissue_bounding_rect(mask) else {
        return Ok(SaliencyMap {
            width: w,
            height: h,
            values: vec![0.0; w * h],
        });
    };
    let var = variance_in(img, rect, cfg.var_window);
    let log = log_energy_in(img, rect, cfg.log_sigma);
    let mut sub_mask = Vec::with_capacity(rect.area());
    for y in rect.y0..rect.y1() {
        sub_mask.extend_from_slice(&mask.bits()[y * w + rect.x0..y * w + rect.x1()]);
    }
    let sub = blend_saliency(
        &SaliencyMap::new(rect.w, rect.h, var)?,
        &SaliencyMap::new(rect.w, rect.h, log)?,
        &BinaryMask::new(rect.w, rect.h, sub_mask).expect("sub-mask matches rect"),
        cfg.lambda_blend,
    )?;
    let mut values = vec![0.0; w * h];
    for (row, src) in sub.values.chunks_exact(rect.w).enumerate() {
        let y = rect.y0 + row;
        values[y * w + rect.x0..y * w + rect.x1()].copy_from_slice(src);
    }
    Ok(SaliencyMap {
        width: w,
        height: h,
        values,
    })
}
