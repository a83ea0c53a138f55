//! Contrast-limited adaptive histogram equalisation.
//!
//! The image is covered by `tile x tile` windows (edge tiles truncated).
//! Each tile gets a 256-bin histogram, clipped at `clip_limit` times the
//! uniform bin height with the excess redistributed evenly, and an
//! equalisation lookup derived from the clipped CDF. Pixels are remapped by
//! bilinear interpolation between the lookups of the four nearest tiles.

use crate::error::{Error, Result};
use crate::img::Image;

const BINS: usize = 256;

/// Per-tile histogram equalisation with clipping; output stays in `[0, 255]`
/// and keeps the input dimensions.
pub fn adaptive_hist_eq(img: &Image, tile: usize, clip_limit: f64) -> Result<Image> {
    if !img.is_gray() {
        return Err(Error::invalid(
            "adaptive_hist_eq expects a single-channel image",
        ));
    }
    if tile == 0 {
        return Err(Error::invalid("tile size must be positive"));
    }
    if !(clip_limit > 0.0) {
        return Err(Error::invalid("clip_limit must be positive"));
    }

    let (w, h) = (img.width(), img.height());
    let ntx = w.div_ceil(tile);
    let nty = h.div_ceil(tile);

    let mut maps: Vec<[f64; BINS]> = Vec::with_capacity(ntx * nty);
    for ty in 0..nty {
        for tx in 0..ntx {
            let x0 = tx * tile;
            let y0 = ty * tile;
            let x1 = (x0 + tile).min(w);
            let y1 = (y0 + tile).min(h);
            maps.push(tile_map(img, x0, y0, x1, y1, clip_limit));
        }
    }

    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        // Position of the pixel between the nominal tile centers.
        let v = (y as f64 + 0.5) / tile as f64 - 0.5;
        let (ty0, ty1, fy) = blend_coords(v, nty);
        for x in 0..w {
            let u = (x as f64 + 0.5) / tile as f64 - 0.5;
            let (tx0, tx1, fx) = blend_coords(u, ntx);
            let bin = bin_of(img.get(x, y, 0));
            let m00 = maps[ty0 * ntx + tx0][bin];
            let m01 = maps[ty0 * ntx + tx1][bin];
            let m10 = maps[ty1 * ntx + tx0][bin];
            let m11 = maps[ty1 * ntx + tx1][bin];
            let top = m00 * (1.0 - fx) + m01 * fx;
            let bot = m10 * (1.0 - fx) + m11 * fx;
            let val = top * (1.0 - fy) + bot * fy;
            out[y * w + x] = val.clamp(0.0, 255.0) as f32;
        }
    }
    Image::new(w, h, 1, out)
}

#[inline]
fn bin_of(v: f32) -> usize {
    (v.floor() as usize).min(BINS - 1)
}

/// Neighbouring tile indices and interpolation fraction for coordinate `v`.
fn blend_coords(v: f64, n: usize) -> (usize, usize, f64) {
    if v <= 0.0 {
        return (0, 0, 0.0);
    }
    if v >= (n - 1) as f64 {
        return (n - 1, n - 1, 0.0);
    }
    let i0 = v.floor() as usize;
    (i0, i0 + 1, v - i0 as f64)
}

fn tile_map(img: &Image, x0: usize, y0: usize, x1: usize, y1: usize, clip_limit: f64) -> [f64; BINS] {
    let n = ((x1 - x0) * (y1 - y0)) as f64;
    let mut hist = [0.0f64; BINS];
    for y in y0..y1 {
        for &px in &img.gray_row(y)[x0..x1] {
            hist[bin_of(px)] += 1.0;
        }
    }

    // Clip at clip_limit times the uniform bin height; spread the excess
    // evenly. Any second-order overshoot from the redistribution is ignored,
    // as in common implementations.
    let limit = clip_limit * n / BINS as f64;
    let mut excess = 0.0;
    for b in hist.iter_mut() {
        if *b > limit {
            excess += *b - limit;
            *b = limit;
        }
    }
    if excess > 0.0 {
        let share = excess / BINS as f64;
        for b in hist.iter_mut() {
            *b += share;
        }
    }

    let mut map = [0.0f64; BINS];
    let mut cdf = 0.0;
    let cdf_min = hist.iter().copied().find(|&c| c > 0.0).unwrap_or(0.0);
    let denom = n - cdf_min;
    for (i, (&count, slot)) in hist.iter().zip(map.iter_mut()).enumerate() {
        cdf += count;
        *slot = if denom > 1e-12 {
            ((cdf - cdf_min) / denom * 255.0).clamp(0.0, 255.0)
        } else {
            // Degenerate single-bin histogram: identity mapping.
            i as f64
        };
    }
    map
}
