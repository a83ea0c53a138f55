//! Grayscale conversion and full-range contrast stretch.

use crate::error::{Error, Result};
use crate::img::Image;

// Rec. 601 luminance weights.
const LUMA_R: f32 = 0.299;
const LUMA_G: f32 = 0.587;
const LUMA_B: f32 = 0.114;

/// Convert to a single channel (luminance weighting for RGB) and stretch the
/// intensity range so the minimum maps to 0 and the maximum to 255. A
/// constant image is returned unchanged, as a single channel.
pub fn normalize_grayscale(img: &Image) -> Result<Image> {
    let gray: Vec<f32> = if img.channels() == 1 {
        img.data().to_vec()
    } else {
        img.data()
            .chunks_exact(3)
            .map(|px| LUMA_R * px[0] + LUMA_G * px[1] + LUMA_B * px[2])
            .collect()
    };

    let min = gray.iter().copied().fold(f32::INFINITY, f32::min);
    let max = gray.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let stretched = if max > min {
        let scale = 255.0 / (max - min);
        gray.iter()
            .map(|&v| ((v - min) * scale).clamp(0.0, 255.0))
            .collect()
    } else {
        gray
    };
    Image::new(img.width(), img.height(), 1, stretched).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::Format(format!("grayscale output invalid: {m}")),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_rgb_maps_to_constant_gray() {
        let img = Image::new(4, 4, 3, vec![100.0; 48]).unwrap();
        let out = normalize_grayscale(&img).unwrap();
        assert_eq!(out.channels(), 1);
        for &v in out.data() {
            assert!((v - 100.0).abs() < 1e-3, "got {v}");
        }
    }

    #[test]
    fn stretch_maps_min_to_zero_and_max_to_255() {
        let img = Image::new(2, 2, 1, vec![50.0, 100.0, 120.0, 150.0]).unwrap();
        let out = normalize_grayscale(&img).unwrap();
        let min = out.data().iter().copied().fold(f32::INFINITY, f32::min);
        let max = out.data().iter().copied().fold(f32::NEG_INFINITY, f32::max);
        assert_eq!(min, 0.0);
        assert_eq!(max, 255.0);
    }

    #[test]
    fn green_is_brighter_than_red() {
        let img = Image::new(2, 1, 3, vec![255.0, 0.0, 0.0, 0.0, 255.0, 0.0]).unwrap();
        // Compare raw luminance before the stretch: green weight exceeds red.
        let red = LUMA_R * 255.0;
        let green = LUMA_G * 255.0;
        assert!(green > red);
        let out = normalize_grayscale(&img).unwrap();
        assert!(out.get(1, 0, 0) > out.get(0, 0, 0));
    }

    #[test]
    fn idempotent() {
        let img = Image::new(3, 1, 1, vec![10.0, 60.0, 200.0]).unwrap();
        let once = normalize_grayscale(&img).unwrap();
        let twice = normalize_grayscale(&once).unwrap();
        assert_eq!(once, twice);
    }
}
