//! Data-level imbalance baselines: random under-sampling of majority
//! classes and augmentation-based over-sampling of minority classes.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::img::Image;
use crate::seed::child_seed;

/// Augmentation applied when synthesising minority samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    /// Rotation range in degrees, inclusive.
    #[serde(default = "default_rotation")]
    pub rotation_range: (f64, f64),
    #[serde(default = "default_true")]
    pub flip_horizontal: bool,
    #[serde(default = "default_true")]
    pub flip_vertical: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_rotation() -> (f64, f64) {
    (-15.0, 15.0)
}

fn default_true() -> bool {
    true
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            rotation_range: default_rotation(),
            flip_horizontal: true,
            flip_vertical: true,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.rotation_range;
        if !(lo <= hi && lo >= -180.0 && hi <= 180.0 && lo == -hi) {
            return Err(Error::invalid(format!(
                "rotation range must be a symmetric subinterval of [-180, 180], got [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// Discard majority-class samples until every class matches the original
/// minimum count. Retained samples keep their dataset order.
pub fn undersample(data: &LabeledDataset, seed: u64) -> Result<LabeledDataset> {
    let counts = data.class_counts();
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::invalid("every class needs at least one sample"));
    }
    let target = *counts.iter().min().expect("non-empty counts");
    let mut keep: Vec<usize> = Vec::with_capacity(target * counts.len());
    for class in 0..data.num_classes() {
        let mut members = data.indices_of_class(class);
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, "undersample", class as u64));
        use rand::seq::SliceRandom;
        members.shuffle(&mut rng);
        members.truncate(target);
        members.sort_unstable();
        keep.extend(members);
    }
    keep.sort_unstable();
    Ok(data.subset(&keep))
}

/// Add augmented copies of minority-class samples until every class matches
/// the original maximum count. Source images are drawn uniformly with
/// replacement; originals are all retained (synthesised samples append).
pub fn oversample(data: &LabeledDataset, aug: &AugmentationConfig) -> Result<LabeledDataset> {
    aug.validate()?;
    let counts = data.class_counts();
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::invalid("every class needs at least one sample"));
    }
    let target = *counts.iter().max().expect("non-empty counts");
    let mut out = data.clone();
    for class in 0..data.num_classes() {
        let members = data.indices_of_class(class);
        let deficit = target - members.len();
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(aug.seed, "oversample", class as u64));
        for _ in 0..deficit {
            let src = members[rng.gen_range(0..members.len())];
            let augmented = augment_image(data.image(src), aug, &mut rng)?;
            out.push(augmented, class);
        }
    }
    Ok(out)
}

/// Random rotation in the configured range followed by coin-flip horizontal
/// and vertical flips. Square images only (cells are square by contract).
pub fn augment_image(
    img: &Image,
    aug: &AugmentationConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Image> {
    aug.validate()?;
    if img.width() != img.height() {
        return Err(Error::invalid(format!(
            "augmentation expects square images, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let (lo, hi) = aug.rotation_range;
    let angle = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
    let mut out = rotate(img, angle)?;
    if aug.flip_horizontal && rng.gen_bool(0.5) {
        out = flip_horizontal(&out);
    }
    if aug.flip_vertical && rng.gen_bool(0.5) {
        out = flip_vertical(&out);
    }
    Ok(out)
}

/// Rotate about the image center by `degrees` (counter-clockwise), bilinear
/// resampling, zero fill outside the source footprint.
pub fn rotate(img: &Image, degrees: f64) -> Result<Image> {
    if degrees == 0.0 {
        return Ok(img.clone());
    }
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let rad = degrees.to_radians();
    let (sin, cos) = rad.sin_cos();
    let mut out = vec![0.0f32; w * h * ch];
    for y in 0..h {
        for x in 0..w {
            // inverse mapping into source coordinates
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let sx = cos * dx + sin * dy + cx;
            let sy = -sin * dx + cos * dy + cy;
            if sx < -0.5 || sy < -0.5 || sx > w as f64 - 0.5 || sy > h as f64 - 0.5 {
                continue; // outside the source footprint: keep zero fill
            }
            let x0 = sx.floor();
            let y0 = sy.floor();
            let tx = (sx - x0) as f32;
            let ty = (sy - y0) as f32;
            for c in 0..ch {
                let at = |xx: f64, yy: f64| -> f32 {
                    if xx < 0.0 || yy < 0.0 || xx >= w as f64 || yy >= h as f64 {
                        0.0
                    } else {
                        img.get(xx as usize, yy as usize, c)
                    }
                };
                let v = at(x0, y0) * (1.0 - tx) * (1.0 - ty)
                    + at(x0 + 1.0, y0) * tx * (1.0 - ty)
                    + at(x0, y0 + 1.0) * (1.0 - tx) * ty
                    + at(x0 + 1.0, y0 + 1.0) * tx * ty;
                out[(y * w + x) * ch + c] = v.clamp(0.0, 255.0);
            }
        }
    }
    Image::new(w, h, ch, out)
}

pub fn flip_horizontal(img: &Image) -> Image {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let mut out = vec![0.0f32; w * h * ch];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                out[(y * w + x) * ch + c] = img.get(w - 1 - x, y, c);
            }
        }
    }
    Image::new(w, h, ch, out).expect("flip preserves validity")
}

pub fn flip_vertical(img: &Image) -> Image {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let mut out = vec![0.0f32; w * h * ch];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                out[(y * w + x) * ch + c] = img.get(x, h - 1 - y, c);
            }
        }
    }
    Image::new(w, h, ch, out).expect("flip preserves validity")
}
