//! Grayscale rasters: decoding, quantized export, cropping and resizing.
//!
//! Coordinates are `(x right, y down)` with the origin at the top-left
//! pixel. Interpolation treats pixel `i` as centered at `i + 0.5`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::{DynamicImage, ExtendedColorType, ImageFormat, ImageReader};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported format in {path}: {detail}")]
    Format { path: String, detail: String },
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::Argument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(RasterError::Argument(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(RasterError::Argument(format!(
                "intensity {} at index {i} outside [0, 1]",
                data[i]
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        assert!((0.0..=1.0).contains(&value));
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn full_rect(&self) -> PixelRect {
        PixelRect::new(0, 0, self.width, self.height)
    }

    /// Quantizes to 8 bits (round half up).
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v * 255.0 + 0.5).floor() as u8)
            .collect()
    }

    pub fn to_u16(&self) -> Vec<u16> {
        self.data
            .iter()
            .map(|v| (v * 65535.0 + 0.5).floor() as u16)
            .collect()
    }
}

/// Integer rectangle; `x0`/`y0` inclusive, `w`/`h` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl PixelRect {
    pub fn new(x0: usize, y0: usize, w: usize, h: usize) -> Self {
        Self { x0, y0, w, h }
    }

    pub fn x1(&self) -> usize {
        self.x0 + self.w
    }

    pub fn y1(&self) -> usize {
        self.y0 + self.h
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.w >= 1 && self.h >= 1 && self.x1() <= width && self.y1() <= height
    }
}

fn io_err(path: &Path, source: std::io::Error) -> RasterError {
    RasterError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Decodes a PNG or binary PGM into `[0, 1]` intensities.
///
/// 8/16-bit gray and 8-bit RGB are accepted. RGB is reduced with BT.601
/// luma weights before scaling by the type maximum.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage, RasterError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let reader = ImageReader::open(path)
        .map_err(|e| io_err(path, e))?
        .with_guessed_format()
        .map_err(|e| io_err(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        Some(other) => {
            return Err(RasterError::Format {
                path: shown,
                detail: format!("container {other:?} is not PNG or PGM"),
            })
        }
        None => {
            return Err(RasterError::Format {
                path: shown,
                detail: "unrecognized container".into(),
            })
        }
    }
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::IoError(io) => io_err(path, io),
        other => RasterError::Format {
            path: shown.clone(),
            detail: other.to_string(),
        },
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let data: Vec<f64> = match &decoded {
        DynamicImage::ImageLuma8(buf) => buf.as_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf
            .as_raw()
            .iter()
            .map(|&v| v as f64 / 65535.0)
            .collect(),
        DynamicImage::ImageRgb8(buf) => buf
            .as_raw()
            .chunks_exact(3)
            .map(|p| {
                let y = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
                (y / 255.0).clamp(0.0, 1.0)
            })
            .collect(),
        other => {
            return Err(RasterError::Format {
                path: shown,
                detail: format!(
                    "color type {:?} (bit depth {}) is not 8/16-bit gray or 8-bit RGB",
                    other.color(),
                    other.color().bits_per_pixel() / other.color().channel_count() as u16
                ),
            })
        }
    };
    GrayImage::new(w, h, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// Writes a binary PGM (P5); 16-bit samples are big-endian.
pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>, depth: BitDepth) -> Result<(), RasterError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    let maxval = match depth {
        BitDepth::Eight => 255,
        BitDepth::Sixteen => 65535,
    };
    let body: Vec<u8> = match depth {
        BitDepth::Eight => img.to_u8(),
        BitDepth::Sixteen => img.to_u16().iter().flat_map(|v| v.to_be_bytes()).collect(),
    };
    write!(out, "P5\n{} {}\n{maxval}\n", img.width, img.height)
        .and_then(|_| out.write_all(&body))
        .and_then(|_| out.flush())
        .map_err(|e| io_err(path, e))
}

/// Writes an 8-bit grayscale PNG.
pub fn save_png(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let path = path.as_ref();
    image::save_buffer_with_format(
        path,
        &img.to_u8(),
        img.width as u32,
        img.height as u32,
        ExtendedColorType::L8,
        ImageFormat::Png,
    )
    .map_err(|e| RasterError::Format {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

/// Returns the `r.w x r.h` subimage; no resampling.
pub fn crop(img: &GrayImage, r: PixelRect) -> Result<GrayImage, RasterError> {
    if !r.fits(img.width, img.height) {
        return Err(RasterError::Argument(format!(
            "rect {r:?} is outside {}x{} image",
            img.width, img.height
        )));
    }
    let mut data = Vec::with_capacity(r.area());
    for y in r.y0..r.y1() {
        let row = y * img.width;
        data.extend_from_slice(&img.data[row + r.x0..row + r.x1()]);
    }
    Ok(GrayImage {
        width: r.w,
        height: r.h,
        data,
    })
}

struct AxisTap {
    lo: usize,
    hi: usize,
    t: f64,
}

fn axis_taps(n_in: usize, n_out: usize) -> Vec<AxisTap> {
    let scale = n_in as f64 / n_out as f64;
    let last = (n_in - 1) as f64;
    (0..n_out)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let lo = src.floor() as usize;
            AxisTap {
                lo,
                hi: (lo + 1).min(n_in - 1),
                t: src - lo as f64,
            }
        })
        .collect()
}

/// Bilinear resize with half-pixel-center mapping and edge clamping.
pub fn resize_bilinear(img: &GrayImage, out_w: usize, out_h: usize) -> Result<GrayImage, RasterError> {
    if out_w == 0 || out_h == 0 {
        return Err(RasterError::Argument(format!(
            "target size must be positive, got {out_w}x{out_h}"
        )));
    }
    let xs = axis_taps(img.width, out_w);
    let ys = axis_taps(img.height, out_h);
    let mut data = Vec::with_capacity(out_w * out_h);
    for ty in &ys {
        let r0 = &img.data[ty.lo * img.width..(ty.lo + 1) * img.width];
        let r1 = &img.data[ty.hi * img.width..(ty.hi + 1) * img.width];
        for tx in &xs {
            let top = r0[tx.lo] + tx.t * (r0[tx.hi] - r0[tx.lo]);
            let bot = r1[tx.lo] + tx.t * (r1[tx.hi] - r1[tx.lo]);
            data.push((top + ty.t * (bot - top)).clamp(0.0, 1.0));
        }
    }
    Ok(GrayImage {
        width: out_w,
        height: out_h,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn indexed(w: usize, h: usize) -> GrayImage {
        let n = (w * h) as f64;
        GrayImage::from_fn(w, h, |x, y| (y * w + x) as f64 / n)
    }

    #[test]
    fn pgm_round_trips_at_both_depths() {
        let dir = tempfile::tempdir().unwrap();
        let img = indexed(7, 5);
        for (depth, step) in [(BitDepth::Eight, 255.0), (BitDepth::Sixteen, 65535.0)] {
            let path = dir.path().join(format!("{depth:?}.pgm"));
            save_pgm(&img, &path, depth).unwrap();
            let back = load_gray(&path).unwrap();
            assert_eq!((back.width(), back.height()), (7, 5));
            for (a, b) in img.data().iter().zip(back.data()) {
                assert!((a - b).abs() <= 0.5 / step + 1e-12, "{depth:?}: {a} vs {b}");
            }
        }
        let bytes = std::fs::read(dir.path().join("Sixteen.pgm")).unwrap();
        // last pixel 34/35 of full scale, stored high byte first
        let v = ((34.0 / 35.0) * 65535.0_f64).round() as u16;
        assert_eq!(&bytes[bytes.len() - 2..], &v.to_be_bytes());
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(GrayImage::new(0, 3, vec![]).is_err());
        assert!(GrayImage::new(2, 2, vec![0.0; 3]).is_err());
        assert!(GrayImage::new(1, 1, vec![1.5]).is_err());
    }

    #[test]
    fn crop_full_rect_is_identity() {
        let img = indexed(7, 5);
        assert_eq!(crop(&img, img.full_rect()).unwrap(), img);
    }

    #[test]
    fn crop_single_top_left_pixel() {
        let img = indexed(4, 4);
        let c = crop(&img, PixelRect::new(0, 0, 1, 1)).unwrap();
        assert_eq!(c.data(), &[img.get(0, 0)]);
    }

    #[test]
    fn crop_center_of_indexed_image() {
        let img = indexed(5, 5);
        let c = crop(&img, PixelRect::new(1, 1, 3, 3)).unwrap();
        let expected: Vec<f64> = [6, 7, 8, 11, 12, 13, 16, 17, 18]
            .iter()
            .map(|&i| i as f64 / 25.0)
            .collect();
        assert_eq!(c.data(), expected.as_slice());
    }

    #[test]
    fn crop_out_of_bounds_is_error() {
        let img = indexed(4, 4);
        assert!(matches!(
            crop(&img, PixelRect::new(2, 2, 3, 1)),
            Err(RasterError::Argument(_))
        ));
        assert!(crop(&img, PixelRect::new(0, 0, 0, 1)).is_err());
    }

    #[test]
    fn resize_to_same_size_is_bit_identical() {
        let img = indexed(9, 6);
        assert_eq!(resize_bilinear(&img, 9, 6).unwrap(), img);
    }

    #[test]
    fn resize_constant_stays_constant() {
        let img = GrayImage::filled(13, 7, 0.5);
        let out = resize_bilinear(&img, 5, 21).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn resize_zero_target_is_error() {
        let img = GrayImage::filled(3, 3, 0.1);
        assert!(resize_bilinear(&img, 0, 3).is_err());
        assert!(resize_bilinear(&img, 3, 0).is_err());
    }

    #[test]
    fn downsize_ramp_matches_pointwise_oracle() {
        // 4x4 ramp, 2x2 output: centers map to source 0.5 and 2.5 on each
        // axis, i.e. the mean of each 2x2 block.
        let img = GrayImage::from_fn(4, 4, |x, y| (x + 4 * y) as f64 / 15.0);
        let out = resize_bilinear(&img, 2, 2).unwrap();
        let oracle = |sx: f64, sy: f64| {
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            let p = |x: usize, y: usize| img.get(x.min(3), y.min(3));
            (1.0 - fx) * (1.0 - fy) * p(x0, y0)
                + fx * (1.0 - fy) * p(x0 + 1, y0)
                + (1.0 - fx) * fy * p(x0, y0 + 1)
                + fx * fy * p(x0 + 1, y0 + 1)
        };
        for oy in 0..2 {
            for ox in 0..2 {
                let sx = (ox as f64 + 0.5) * 2.0 - 0.5;
                let sy = (oy as f64 + 0.5) * 2.0 - 0.5;
                assert!((out.get(ox, oy) - oracle(sx, sy)).abs() < 1e-6);
            }
        }
        assert!((out.get(0, 0) - 2.5 / 15.0).abs() < 1e-12);
    }
}
