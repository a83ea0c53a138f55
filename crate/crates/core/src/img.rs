//! Pixel grid type and image file I/O.
//!
//! Intensities are stored as `f32` in `[0, 255]` and stay continuous through
//! the whole processing pipeline; quantisation to 8 bits happens only when a
//! file is written. This keeps repeated transforms (equalisation, rotation,
//! resampling) free of cumulative rounding error.

use std::path::Path;

use crate::error::{Error, Result};

/// A 2-D pixel grid, grayscale (1 channel) or RGB (3 channels, interleaved).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    /// Row-major, channel-interleaved, each value in `[0, 255]`.
    data: Vec<f32>,
}

impl Image {
    /// Build an image from a flat buffer, validating the type invariants.
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be at least 1x1"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!(
                "image must have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "pixel buffer length {} does not match {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 255.0) {
            return Err(Error::invalid("intensities must lie within [0, 255]"));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    /// Constant-intensity grayscale image.
    pub fn constant(width: usize, height: usize, value: f32) -> Result<Self> {
        Image::new(width, height, 1, vec![value; width * height])
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            channels: 1,
            data: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Intensity of channel `c` at `(x, y)`.
    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f32) {
        self.data[(y * self.width + x) * self.channels + c] = value;
    }

    /// Grayscale pixel row `y` (single-channel images only).
    #[inline]
    pub fn gray_row(&self, y: usize) -> &[f32] {
        debug_assert_eq!(self.channels, 1);
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn is_gray(&self) -> bool {
        self.channels == 1
    }

    /// Quantise to 8-bit samples (round-to-nearest, clamped).
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| v.clamp(0.0, 255.0).round() as u8)
            .collect()
    }

    /// Decode an image file (PNG or PGM/PNM by content).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let dyn_img = image::open(path.as_ref())?;
        let (width, height) = (dyn_img.width() as usize, dyn_img.height() as usize);
        match dyn_img {
            image::DynamicImage::ImageLuma8(buf) => {
                let data = buf.into_raw().into_iter().map(f32::from).collect();
                Image::new(width, height, 1, data)
            }
            other => {
                let buf = other.into_rgb8();
                let data = buf.into_raw().into_iter().map(f32::from).collect();
                Image::new(width, height, 3, data)
            }
        }
    }

    /// Encode to PNG or PGM depending on the file extension.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes();
        let color = if self.channels == 1 {
            image::ColorType::L8
        } else {
            image::ColorType::Rgb8
        };
        image::save_buffer(
            path,
            &bytes,
            self.width as u32,
            self.height as u32,
            color,
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_dimensions() {
        assert!(Image::new(0, 4, 1, vec![]).is_err());
        assert!(Image::new(4, 0, 1, vec![]).is_err());
    }

    #[test]
    fn rejects_bad_channel_count() {
        assert!(Image::new(2, 2, 2, vec![0.0; 8]).is_err());
    }

    #[test]
    fn rejects_out_of_range_intensity() {
        assert!(Image::new(1, 1, 1, vec![256.0]).is_err());
        assert!(Image::new(1, 1, 1, vec![-0.5]).is_err());
        assert!(Image::new(1, 1, 1, vec![f32::NAN]).is_err());
    }

    #[test]
    fn quantisation_rounds_to_nearest() {
        let img = Image::new(2, 1, 1, vec![10.4, 10.6]).unwrap();
        assert_eq!(img.to_bytes(), vec![10, 11]);
    }

    #[test]
    fn png_round_trip_preserves_8bit_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let img = Image::new(3, 2, 1, vec![0.0, 50.0, 100.0, 150.0, 200.0, 255.0]).unwrap();
        img.save(&path).unwrap();
        let back = Image::load(&path).unwrap();
        assert_eq!(back.width(), 3);
        assert_eq!(back.height(), 2);
        assert_eq!(back.to_bytes(), img.to_bytes());
    }

    #[test]
    fn pgm_round_trip_preserves_8bit_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        let img = Image::new(2, 2, 1, vec![7.0, 8.0, 9.0, 10.0]).unwrap();
        img.save(&path).unwrap();
        let back = Image::load(&path).unwrap();
        assert_eq!(back.to_bytes(), img.to_bytes());
    }
}
