//! Synthetic three-class cell image generator.
//!
//! The classes are deliberately cartoonish but geometrically separable:
//!
//! * class 0, "target cell": bright ring with a re-darkened central disk
//! * class 1, "hypochromic": thin dark rim around an enlarged pale center
//! * class 2, "normal": full disk with a mild central pallor
//!
//! Separability comes from the disjoint parameter ranges below: the pallor
//! radius ranges of classes 1 and 2 do not overlap, their pallor depths do
//! not overlap, and only class 0 has a central disk inside its pallor ring.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::img::Image;
use crate::imgproc::CircleDetection;
use crate::seed::child_seed;

/// Number of morphology classes produced by this generator.
pub const NUM_CLASSES: usize = 3;

/// Background (field) intensity for cells and smears.
pub const BACKGROUND: f64 = 232.0;

/// Cell body intensity range (per-image jitter).
pub const BODY_INTENSITY: (f64, f64) = (118.0, 148.0);
/// Cell radius as a fraction of the half image size (per-image jitter).
pub const CELL_RADIUS_FRACTION: (f64, f64) = (0.74, 0.86);

// Class 0 (target cell): pale ring between a central disk and the body rim.
pub const TARGET_CORE_RADIUS: (f64, f64) = (0.20, 0.32);
pub const TARGET_PALLOR_OUTER: (f64, f64) = (0.55, 0.68);
pub const TARGET_PALLOR_DEPTH: (f64, f64) = (55.0, 85.0);

// Class 1 (hypochromic): enlarged pale center, strong pallor.
pub const HYPO_PALLOR_RADIUS: (f64, f64) = (0.58, 0.72);
pub const HYPO_PALLOR_DEPTH: (f64, f64) = (60.0, 90.0);

// Class 2 (normal): small, mild central pallor.
pub const NORMAL_PALLOR_RADIUS: (f64, f64) = (0.25, 0.40);
pub const NORMAL_PALLOR_DEPTH: (f64, f64) = (18.0, 38.0);

/// Width of every radial transition, in units of the cell radius. Wide
/// enough that bilinear resampling (rotation, rescaling) loses little.
const EDGE_SOFTNESS: f64 = 0.12;

/// Cell radius range used by [`generate_smear`], as a fraction of the smear
/// side; exposed so callers can configure circle detection to match.
pub const SMEAR_RADIUS_FRACTION: (f64, f64) = (0.045, 0.060);
/// Minimum free pixels between smear cell rims and to the border.
const SMEAR_GAP: f64 = 6.0;
/// Per-pixel noise on smears (kept light; detection tests own the budget).
const SMEAR_NOISE_STD: f64 = 2.0;

/// Configuration for [`generate_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Side length of each generated cell image.
    #[serde(default = "default_image_size")]
    pub image_size: usize,
    /// Images per class, indexed by class id; length [`NUM_CLASSES`].
    pub class_counts: Vec<usize>,
    /// Standard deviation of per-pixel Gaussian noise, in intensity units.
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_image_size() -> usize {
    32
}

fn default_noise_std() -> f64 {
    8.0
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 8 {
            return Err(Error::invalid("image_size must be at least 8"));
        }
        if self.class_counts.len() != NUM_CLASSES {
            return Err(Error::invalid(format!(
                "class_counts must list {NUM_CLASSES} classes, got {}",
                self.class_counts.len()
            )));
        }
        if self.class_counts.iter().all(|&c| c == 0) {
            return Err(Error::invalid("at least one class count must be positive"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::invalid("noise_std must be non-negative"));
        }
        Ok(())
    }
}

/// Per-cell appearance parameters drawn from the class's ranges.
#[derive(Debug, Clone, Copy)]
struct CellStyle {
    body: f64,
    /// (inner radius, outer radius, intensity) of the pale region; for
    /// classes 1 and 2 the inner radius is 0.
    pallor_inner: f64,
    pallor_outer: f64,
    pallor: f64,
}

fn draw_style(class_id: usize, rng: &mut ChaCha8Rng) -> Result<CellStyle> {
    let body = rng.gen_range(BODY_INTENSITY.0..=BODY_INTENSITY.1);
    let style = match class_id {
        0 => CellStyle {
            body,
            pallor_inner: rng.gen_range(TARGET_CORE_RADIUS.0..=TARGET_CORE_RADIUS.1),
            pallor_outer: rng.gen_range(TARGET_PALLOR_OUTER.0..=TARGET_PALLOR_OUTER.1),
            pallor: body + rng.gen_range(TARGET_PALLOR_DEPTH.0..=TARGET_PALLOR_DEPTH.1),
        },
        1 => CellStyle {
            body,
            pallor_inner: 0.0,
            pallor_outer: rng.gen_range(HYPO_PALLOR_RADIUS.0..=HYPO_PALLOR_RADIUS.1),
            pallor: body + rng.gen_range(HYPO_PALLOR_DEPTH.0..=HYPO_PALLOR_DEPTH.1),
        },
        2 => CellStyle {
            body,
            pallor_inner: 0.0,
            pallor_outer: rng.gen_range(NORMAL_PALLOR_RADIUS.0..=NORMAL_PALLOR_RADIUS.1),
            pallor: body + rng.gen_range(NORMAL_PALLOR_DEPTH.0..=NORMAL_PALLOR_DEPTH.1),
        },
        other => {
            return Err(Error::invalid(format!(
                "unknown class id {other}, expected 0..{NUM_CLASSES}"
            )))
        }
    };
    Ok(style)
}

#[inline]
fn smoothstep(u: f64, boundary: f64) -> f64 {
    let t = ((u - boundary) / EDGE_SOFTNESS * 0.5 + 0.5).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

#[inline]
fn mix(a: f64, b: f64, t: f64) -> f64 {
    a * (1.0 - t) + b * t
}

/// Radial intensity profile at normalised radius `u` (1.0 = cell rim).
fn radial_intensity(style: &CellStyle, u: f64) -> f64 {
    let mut v = if style.pallor_inner > 0.0 {
        // central disk at body intensity, then the pale ring
        mix(style.body, style.pallor, smoothstep(u, style.pallor_inner))
    } else {
        style.pallor
    };
    v = mix(v, style.body, smoothstep(u, style.pallor_outer));
    mix(v, BACKGROUND, smoothstep(u, 1.0))
}

fn paint_cell(canvas: &mut Image, cx: f64, cy: f64, radius: f64, style: &CellStyle) {
    let reach = radius * (1.0 + 2.0 * EDGE_SOFTNESS);
    let x0 = ((cx - reach).floor().max(0.0)) as usize;
    let y0 = ((cy - reach).floor().max(0.0)) as usize;
    let x1 = ((cx + reach).ceil() as usize + 1).min(canvas.width());
    let y1 = ((cy + reach).ceil() as usize + 1).min(canvas.height());
    for y in y0..y1 {
        for x in x0..x1 {
            let u = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt() / radius;
            if u <= 1.0 + 2.0 * EDGE_SOFTNESS {
                canvas.set(x, y, 0, radial_intensity(style, u) as f32);
            }
        }
    }
}

fn apply_noise(img: &mut Image, std: f64, rng: &mut ChaCha8Rng) {
    if std <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, std).expect("std validated non-negative");
    for v in img.data_mut() {
        *v = (f64::from(*v) + normal.sample(rng)).clamp(0.0, 255.0) as f32;
    }
}

/// Render one cell image of the given class. Deterministic in the rng state.
pub fn generate_cell(
    class_id: usize,
    size: usize,
    noise_std: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Image> {
    if size < 8 {
        return Err(Error::invalid("cell image size must be at least 8"));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::invalid("noise_std must be non-negative"));
    }
    let style = draw_style(class_id, rng)?;
    let radius =
        rng.gen_range(CELL_RADIUS_FRACTION.0..=CELL_RADIUS_FRACTION.1) * (size as f64) / 2.0;
    let center = (size as f64 - 1.0) / 2.0;
    let mut img = Image::constant(size, size, BACKGROUND as f32)?;
    paint_cell(&mut img, center, center, radius, &style);
    apply_noise(&mut img, noise_std, rng);
    Ok(img)
}

/// Generate `cfg.class_counts[c]` images of each class `c`, shuffled.
/// Identical configs produce bit-identical datasets; per-image seeds are
/// derived from `(cfg.seed, class, index)` so images can be generated in
/// parallel or in any order without changing the result.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (class_id, &count) in cfg.class_counts.iter().enumerate() {
        for i in 0..count {
            let stream = ((class_id as u64) << 40) | i as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(child_seed(cfg.seed, "cell", stream));
            images.push(generate_cell(class_id, cfg.image_size, cfg.noise_std, &mut rng)?);
            labels.push(class_id);
        }
    }

    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(cfg.seed, "dataset-shuffle", 0));
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);
    let images = order.iter().map(|&i| images[i].clone()).collect();
    let labels = order.iter().map(|&i| labels[i]).collect();
    LabeledDataset::new(images, labels, NUM_CLASSES)
}

/// Compose a smear of `n_cells` non-overlapping cells of random classes and
/// return it with the exact circle ground truth (scores are zero: these are
/// not detector outputs). Placement is rejection-sampled; if the requested
/// count does not fit, the error names the number that did.
pub fn generate_smear(
    n_cells: usize,
    size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Image, Vec<CircleDetection>)> {
    if size < 32 {
        return Err(Error::invalid("smear size must be at least 32"));
    }
    let mut img = Image::constant(size, size, BACKGROUND as f32)?;
    let mut truth: Vec<CircleDetection> = Vec::with_capacity(n_cells);

    let r_lo = SMEAR_RADIUS_FRACTION.0 * size as f64;
    let r_hi = SMEAR_RADIUS_FRACTION.1 * size as f64;
    let max_attempts = 400 * n_cells.max(1);
    let mut attempts = 0;
    while truth.len() < n_cells && attempts < max_attempts {
        attempts += 1;
        let r = rng.gen_range(r_lo..=r_hi);
        let margin = r + SMEAR_GAP;
        if 2.0 * margin >= size as f64 {
            break;
        }
        let cx = rng.gen_range(margin..=(size as f64 - margin));
        let cy = rng.gen_range(margin..=(size as f64 - margin));
        let clear = truth.iter().all(|t| {
            let d = ((t.center_x - cx).powi(2) + (t.center_y - cy).powi(2)).sqrt();
            d > t.radius + r + SMEAR_GAP
        });
        if !clear {
            continue;
        }
        let class_id = rng.gen_range(0..NUM_CLASSES);
        let style = draw_style(class_id, rng)?;
        paint_cell(&mut img, cx, cy, r, &style);
        truth.push(CircleDetection {
            center_x: cx,
            center_y: cy,
            radius: r,
            accumulator_score: 0.0,
        });
    }
    if truth.len() < n_cells {
        return Err(Error::Capacity {
            detail: format!("could not place {n_cells} cells on a {size}x{size} smear"),
            max_feasible: truth.len(),
        });
    }
    apply_noise(&mut img, SMEAR_NOISE_STD, rng);
    Ok((img, truth))
}
