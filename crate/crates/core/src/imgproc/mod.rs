//! Smear-to-cell image pipeline: upscaling, grayscale normalisation,
//! contrast-limited adaptive histogram equalisation, Hough circle detection,
//! and cell cropping with zero padding.
//!
//! All operations are pure functions of their inputs and safe to call from
//! multiple threads.

mod clahe;
mod grayscale;
mod hough;
mod resize;
mod segment;

pub use clahe::adaptive_hist_eq;
pub use grayscale::normalize_grayscale;
pub use hough::hough_circles;
pub use resize::{upscale, upscale_with, Interpolation};
pub use segment::segment_cells;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One detected circle in accumulator space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleDetection {
    pub center_x: f64,
    pub center_y: f64,
    pub radius: f64,
    /// Mean gradient-weighted vote per perimeter pixel; non-negative,
    /// comparable across radii.
    pub accumulator_score: f64,
}

/// Parameters for the segmentation pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    /// Side length of every emitted cell image.
    pub expected_cell_diameter: usize,
    /// Side length in pixels of each equalisation tile.
    pub clahe_tile: usize,
    /// Histogram clip limit as a multiple of the uniform bin height.
    pub clahe_clip_limit: f64,
    pub hough_min_radius: usize,
    pub hough_max_radius: usize,
    /// Minimum distance between accepted circle centers.
    pub hough_min_center_distance: f64,
    /// Minimum accumulator score for a detection to be kept.
    pub hough_accumulator_threshold: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            expected_cell_diameter: 224,
            clahe_tile: 8,
            clahe_clip_limit: 2.0,
            hough_min_radius: 80,
            hough_max_radius: 120,
            hough_min_center_distance: 80.0,
            hough_accumulator_threshold: 0.25,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.expected_cell_diameter == 0 {
            return Err(Error::invalid("expected_cell_diameter must be positive"));
        }
        if self.clahe_tile == 0 {
            return Err(Error::invalid("clahe_tile must be positive"));
        }
        if !(self.clahe_clip_limit > 0.0) {
            return Err(Error::invalid("clahe_clip_limit must be positive"));
        }
        if self.hough_min_radius == 0 || self.hough_min_radius >= self.hough_max_radius {
            return Err(Error::invalid(format!(
                "hough radius range [{}, {}] is empty or degenerate",
                self.hough_min_radius, self.hough_max_radius
            )));
        }
        if !(self.hough_min_center_distance >= 0.0) {
            return Err(Error::invalid("hough_min_center_distance must be >= 0"));
        }
        if !(self.hough_accumulator_threshold >= 0.0) {
            return Err(Error::invalid("hough_accumulator_threshold must be >= 0"));
        }
        Ok(())
    }
}
