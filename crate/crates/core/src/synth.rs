//! Synthetic phantoms, manifests and score cohorts for tests and benchmarks.

use std::path::{Path, PathBuf};

use crate::cohort::{ImageRecord, Side, View};
use crate::evalstats::Prediction;
use crate::raster::{save_png, GrayImage, RasterError};
use crate::rng::DrawStream;

pub const BACKGROUND: f64 = 0.05;
pub const TISSUE: f64 = 0.8;

/// Smooth bright disc on a dark background, optionally with one square
/// patch of uniform noise inside the disc.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub size: usize,
    pub disc_center: (f64, f64),
    pub disc_radius: f64,
    /// Center of the noise patch in pixel coordinates.
    pub patch_center: Option<(f64, f64)>,
    pub patch_size: usize,
    /// Width of the cosine ramp at the disc boundary.
    pub edge_ramp: f64,
}

impl Phantom {
    /// 1024x1024 disc covering 30% of the frame with a 200x200 patch.
    pub fn standard(patch_center: (f64, f64)) -> Self {
        let size = 1024;
        Self {
            size,
            disc_center: (size as f64 / 2.0, size as f64 / 2.0),
            disc_radius: (0.3 * (size * size) as f64 / std::f64::consts::PI).sqrt(),
            patch_center: Some(patch_center),
            patch_size: 200,
            edge_ramp: 24.0,
        }
    }

    pub fn render(&self, seed: u64) -> GrayImage {
        let mut rng = DrawStream::new(seed);
        let (dcx, dcy) = self.disc_center;
        let half = self.patch_size as f64 / 2.0;
        GrayImage::from_fn(self.size, self.size, |x, y| {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let r = ((px - dcx).powi(2) + (py - dcy).powi(2)).sqrt();
            // ramp straddles the nominal radius so the 50% level sits on it
            let t = ((self.disc_radius + self.edge_ramp / 2.0 - r) / self.edge_ramp).clamp(0.0, 1.0);
            let blend = 0.5 - 0.5 * (std::f64::consts::PI * t).cos();
            let mut v = BACKGROUND + (TISSUE - BACKGROUND) * blend;
            if let Some((pcx, pcy)) = self.patch_center {
                if (px - pcx).abs() < half && (py - pcy).abs() < half {
                    v = rng.uniform(0.3, 1.0);
                }
            }
            v
        })
    }
}

/// Patch centers for phantom `i`: points on the 192-window center grid
/// (multiples of 64 offset by 96) that keep the patch inside the disc.
pub fn patch_center_for(index: u64, seed: u64) -> (f64, f64) {
    let grid = [416.0, 480.0, 544.0, 608.0];
    let mut rng = DrawStream::child(seed, index);
    (grid[rng.index(grid.len())], grid[rng.index(grid.len())])
}

/// Writes `n_patients * 4` standard phantoms as 8-bit PNGs under
/// `dir/{Cancer,Normal}/P_xxxxx/{LEFT,RIGHT}_{CC,MLO}.png`.
pub fn write_phantom_tree(dir: &Path, n_patients: usize, seed: u64) -> Result<Vec<PathBuf>, RasterError> {
    let mut paths = Vec::new();
    let mut idx = 0u64;
    for p in 0..n_patients {
        let class = if p % 3 == 0 { "Cancer" } else { "Normal" };
        let pdir = dir.join(class).join(format!("P_{p:05}"));
        std::fs::create_dir_all(&pdir).map_err(|e| RasterError::Io {
            path: pdir.display().to_string(),
            source: e,
        })?;
        for side in ["LEFT", "RIGHT"] {
            for view in ["CC", "MLO"] {
                let ph = Phantom::standard(patch_center_for(idx, seed));
                let img = ph.render(crate::rng::split(seed, idx));
                let path = pdir.join(format!("{side}_{view}.png"));
                save_png(&img, &path)?;
                paths.push(path);
                idx += 1;
            }
        }
    }
    Ok(paths)
}

/// Four views per patient, ids `S_xxxxx`; roughly `pos_rate` of patients
/// positive, with the positive label on one breast only.
pub fn synthetic_records(n_patients: usize, pos_rate: f64, seed: u64) -> Vec<ImageRecord> {
    let mut rng = DrawStream::new(seed);
    let mut out = Vec::with_capacity(n_patients * 4);
    for p in 0..n_patients {
        let positive = rng.next_f64() < pos_rate;
        let bad_side = if rng.next_f64() < 0.5 { Side::Left } else { Side::Right };
        let patient_id = format!("S_{p:05}");
        for side in [Side::Left, Side::Right] {
            for view in [View::Cc, View::Mlo] {
                out.push(ImageRecord {
                    image_id: format!("{patient_id}/{side}_{view}"),
                    patient_id: patient_id.clone(),
                    side,
                    view,
                    label: (positive && side == bad_side) as u8,
                    path: PathBuf::from(format!("{patient_id}/{side}_{view}.png")),
                });
            }
        }
    }
    out
}

/// Binormal scores: negatives ~ N(0, 1), positives ~ N(`shift`, 1), mapped
/// through the logistic function into (0, 1). Exactly `n_pos` positives.
pub fn gaussian_cohort(n: usize, n_pos: usize, shift: f64, seed: u64) -> Vec<Prediction> {
    let mut rng = DrawStream::new(seed);
    (0..n)
        .map(|i| {
            let label = (i < n_pos) as u8;
            let z = rng.standard_normal() + shift * label as f64;
            Prediction::new(format!("G_{i:05}"), 1.0 / (1.0 + (-z).exp()), label)
        })
        .collect()
}
