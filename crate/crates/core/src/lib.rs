//! Class-imbalance learning toolkit.
//!
//! Desk-scale components for studying loss-level and data-level treatments
//! of imbalanced image classification:
//!
//! * [`imgproc`] — blood-smear style segmentation pipeline (upscaling,
//!   grayscale normalisation, CLAHE, Hough circle detection, cell cropping).
//! * [`synthgen`] — deterministic three-class synthetic cell generator with
//!   configurable class distributions.
//! * [`losses`] — cross-entropy and alpha-balanced focal loss with analytic
//!   logit gradients.
//! * [`nn`] — minimal differentiable layer engine with residual and dense
//!   blocks, trained with Adam.
//! * [`sampling`] — random under-sampling and augmentation over-sampling.
//! * [`metrics`] — confusion matrix, F1, rank-statistic AUROC, imbalance
//!   ratio, relative improvement.
//! * [`experiment`] — split / cross-validate / retrain / evaluate protocol
//!   with distribution schedules.

pub mod dataset;
pub mod error;
pub mod img;
pub mod imgproc;
pub mod losses;
pub mod mat;
pub mod metrics;
pub mod nn;
pub mod sampling;
pub mod seed;
pub mod synthgen;

pub use dataset::LabeledDataset;
pub use error::{Error, Result};
pub use img::Image;
pub use mat::Matrix;
