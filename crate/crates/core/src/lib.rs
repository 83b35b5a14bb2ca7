//! Label-free ROI banks and stochastic ROI-crop augmentation for grayscale
//! mammograms, with patient-level folds and evaluation statistics.
//!
//! Pipeline per image: [`tissue`] mask, [`saliency`] map, sliding-window
//! proposals ranked into a [`roibank::RoiBank`], then [`augment`] draws crops
//! from the bank during training. [`cohort`] keeps patients within one fold
//! and [`evalstats`] scores predictions at view, breast and patient level.

pub mod augment;
pub mod cohort;
pub mod evalstats;
pub mod geometry;
pub mod integral;
pub mod raster;
pub mod rng;
pub mod roibank;
pub mod saliency;
pub mod synth;
pub mod tissue;

pub use geometry::BBox;
pub use raster::GrayImage;
pub use rng::DrawStream;
pub use roibank::{RoiBank, ScoredBox};
