//! Image upscaling by interpolation.

use crate::error::{Error, Result};
use crate::img::Image;

/// Interpolation kernel used by [`upscale_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Bilinear,
    Bicubic,
}

/// Upscale by `ratio >= 1` with the default bicubic kernel.
pub fn upscale(img: &Image, ratio: f64) -> Result<Image> {
    upscale_with(img, ratio, Interpolation::Bicubic)
}

/// Upscale by `ratio >= 1`; output is `round(w*ratio) x round(h*ratio)`.
pub fn upscale_with(img: &Image, ratio: f64, method: Interpolation) -> Result<Image> {
    if !ratio.is_finite() || ratio < 1.0 {
        return Err(Error::invalid(format!(
            "upscale ratio must be finite and >= 1, got {ratio}"
        )));
    }
    let out_w = ((img.width() as f64) * ratio).round() as usize;
    let out_h = ((img.height() as f64) * ratio).round() as usize;
    if out_w == img.width() && out_h == img.height() && ratio == 1.0 {
        return Ok(img.clone());
    }

    let ch = img.channels();
    let mut out = vec![0.0f32; out_w * out_h * ch];
    // Center-aligned sample mapping: destination pixel centers land at
    // (x + 0.5) / ratio - 0.5 in source coordinates.
    let sx_of = |x: usize| (x as f64 + 0.5) / ratio - 0.5;

    for y in 0..out_h {
        let sy = sx_of(y);
        for x in 0..out_w {
            let sx = sx_of(x);
            for c in 0..ch {
                let v = match method {
                    Interpolation::Bilinear => sample_bilinear(img, sx, sy, c),
                    Interpolation::Bicubic => sample_bicubic(img, sx, sy, c),
                };
                out[(y * out_w + x) * ch + c] = v.clamp(0.0, 255.0) as f32;
            }
        }
    }
    Image::new(out_w, out_h, ch, out)
}

#[inline]
fn clamp_coord(v: i64, max: usize) -> usize {
    v.clamp(0, max as i64 - 1) as usize
}

fn sample_bilinear(img: &Image, sx: f64, sy: f64, c: usize) -> f64 {
    let x0 = sx.floor() as i64;
    let y0 = sy.floor() as i64;
    let tx = sx - x0 as f64;
    let ty = sy - y0 as f64;
    let mut acc = 0.0;
    for (dy, wy) in [(0, 1.0 - ty), (1, ty)] {
        let yy = clamp_coord(y0 + dy, img.height());
        for (dx, wx) in [(0, 1.0 - tx), (1, tx)] {
            let xx = clamp_coord(x0 + dx, img.width());
            acc += wy * wx * f64::from(img.get(xx, yy, c));
        }
    }
    acc
}

/// Catmull-Rom cubic kernel (a = -0.5).
#[inline]
fn cubic_weight(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x < 1.0 {
        (A + 2.0) * x * x * x - (A + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        A * (x * x * x - 5.0 * x * x + 8.0 * x - 4.0)
    } else {
        0.0
    }
}

fn sample_bicubic(img: &Image, sx: f64, sy: f64, c: usize) -> f64 {
    let x0 = sx.floor() as i64;
    let y0 = sy.floor() as i64;
    let tx = sx - x0 as f64;
    let ty = sy - y0 as f64;
    let mut acc = 0.0;
    let mut wsum = 0.0;
    for dy in -1..=2i64 {
        let wy = cubic_weight(ty - dy as f64);
        if wy == 0.0 {
            continue;
        }
        let yy = clamp_coord(y0 + dy, img.height());
        for dx in -1..=2i64 {
            let wx = cubic_weight(tx - dx as f64);
            if wx == 0.0 {
                continue;
            }
            let xx = clamp_coord(x0 + dx, img.width());
            acc += wy * wx * f64::from(img.get(xx, yy, c));
            wsum += wy * wx;
        }
    }
    // Weight sums deviate from 1 only by rounding; normalising keeps
    // constant inputs exactly constant.
    acc / wsum
}
