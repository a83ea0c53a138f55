//! Cell segmentation: grayscale normalisation, contrast equalisation, circle
//! detection, then per-detection cropping with zero padding to a fixed size.

use crate::error::Result;
use crate::img::Image;
use crate::imgproc::{adaptive_hist_eq, hough_circles, normalize_grayscale};
use crate::imgproc::{CircleDetection, SegmentationConfig};

/// Run the full pipeline on a smear and return one fixed-size image per
/// detected cell, in detection order.
pub fn segment_cells(smear: &Image, cfg: &SegmentationConfig) -> Result<Vec<Image>> {
    Ok(segment_cells_with_detections(smear, cfg)?.0)
}

/// Like [`segment_cells`] but also returns the detections the crops came
/// from, index-aligned.
pub fn segment_cells_with_detections(
    smear: &Image,
    cfg: &SegmentationConfig,
) -> Result<(Vec<Image>, Vec<CircleDetection>)> {
    cfg.validate()?;
    let gray = normalize_grayscale(smear)?;
    let equalized = adaptive_hist_eq(&gray, cfg.clahe_tile, cfg.clahe_clip_limit)?;
    let detections = hough_circles(&equalized, cfg)?;
    // Crops are taken from the normalised image: equalisation exists to make
    // cell boundaries detectable, not to restyle the emitted cells.
    let cells = detections
        .iter()
        .map(|det| extract_cell(&gray, det, cfg.expected_cell_diameter))
        .collect::<Result<Vec<_>>>()?;
    Ok((cells, detections))
}

/// Crop the square of side `round(2r)` around a detection and fit it to
/// `diameter x diameter`: smaller crops are centered on a zero border,
/// over-size crops are scaled down. Windows reaching past the image edge are
/// clamped to it before padding.
pub fn extract_cell(gray: &Image, det: &CircleDetection, diameter: usize) -> Result<Image> {
    debug_assert!(gray.is_gray());
    let (w, h) = (gray.width(), gray.height());
    let side = ((2.0 * det.radius).round() as usize).max(1);

    let x0 = (det.center_x - (side as f64 - 1.0) / 2.0).round() as i64;
    let y0 = (det.center_y - (side as f64 - 1.0) / 2.0).round() as i64;
    let x0c = x0.clamp(0, w as i64) as usize;
    let y0c = y0.clamp(0, h as i64) as usize;
    let x1c = (x0 + side as i64).clamp(0, w as i64) as usize;
    let y1c = (y0 + side as i64).clamp(0, h as i64) as usize;
    let cw = x1c.saturating_sub(x0c).max(1).min(w - x0c.min(w - 1));
    let chg = y1c.saturating_sub(y0c).max(1).min(h - y0c.min(h - 1));

    let mut crop = vec![0.0f32; cw * chg];
    for (row, y) in (y0c..y0c + chg).enumerate() {
        crop[row * cw..(row + 1) * cw].copy_from_slice(&gray.gray_row(y)[x0c..x0c + cw]);
    }
    let crop = Image::new(cw, chg, 1, crop)?;

    if cw > diameter || chg > diameter {
        return shrink_to(&crop, diameter, diameter);
    }

    let mut out = Image::zeros(diameter, diameter);
    let ox = (diameter - cw) / 2;
    let oy = (diameter - chg) / 2;
    for y in 0..chg {
        let dst_row = (oy + y) * diameter + ox;
        out.data_mut()[dst_row..dst_row + cw].copy_from_slice(crop.gray_row(y));
    }
    Ok(out)
}

/// Bilinear resize used only for the rare crop-larger-than-target case.
fn shrink_to(img: &Image, out_w: usize, out_h: usize) -> Result<Image> {
    let mut out = vec![0.0f32; out_w * out_h];
    let sx_ratio = img.width() as f64 / out_w as f64;
    let sy_ratio = img.height() as f64 / out_h as f64;
    for y in 0..out_h {
        let sy = (y as f64 + 0.5) * sy_ratio - 0.5;
        let y0 = sy.floor().clamp(0.0, img.height() as f64 - 1.0) as usize;
        let y1 = (y0 + 1).min(img.height() - 1);
        let ty = (sy - y0 as f64).clamp(0.0, 1.0) as f32;
        for x in 0..out_w {
            let sx = (x as f64 + 0.5) * sx_ratio - 0.5;
            let x0 = sx.floor().clamp(0.0, img.width() as f64 - 1.0) as usize;
            let x1 = (x0 + 1).min(img.width() - 1);
            let tx = (sx - x0 as f64).clamp(0.0, 1.0) as f32;
            let top = img.get(x0, y0, 0) * (1.0 - tx) + img.get(x1, y0, 0) * tx;
            let bot = img.get(x0, y1, 0) * (1.0 - tx) + img.get(x1, y1, 0) * tx;
            out[y * out_w + x] = (top * (1.0 - ty) + bot * ty).clamp(0.0, 255.0);
        }
    }
    Image::new(out_w, out_h, 1, out)
}
