//! Circle detection by gradient voting in (center_x, center_y, radius) space.
//!
//! Edge pixels (Sobel magnitude above an adaptive threshold on a blurred
//! copy) vote along their gradient direction, both inward and outward, once
//! per candidate radius. Peaks are local maxima of the accumulator; each
//! peak's score is its 3x3x3 neighbourhood vote mass divided by the ideal
//! perimeter length, so scores are comparable across radii. Non-maximum
//! suppression keeps the strongest detection within any
//! `hough_min_center_distance` neighbourhood.

use crate::error::{Error, Result};
use crate::img::Image;
use crate::imgproc::{CircleDetection, SegmentationConfig};

/// Edge pixels must reach this fraction of the strongest gradient.
const EDGE_REL_THRESHOLD: f32 = 0.25;
/// Below this absolute magnitude an image is treated as featureless.
const EDGE_ABS_FLOOR: f32 = 1e-3;

/// Detect circles with radii in `[hough_min_radius, hough_max_radius]`.
/// Detections come back sorted by accumulator score, strongest first.
pub fn hough_circles(img: &Image, cfg: &SegmentationConfig) -> Result<Vec<CircleDetection>> {
    cfg.validate()?;
    if !img.is_gray() {
        return Err(Error::invalid("hough_circles expects a single-channel image"));
    }
    let (w, h) = (img.width(), img.height());
    let r_min = cfg.hough_min_radius;
    let r_max = cfg.hough_max_radius;
    let n_r = r_max - r_min + 1;

    let blurred = gaussian5(img);
    let (gx, gy, mag) = sobel(&blurred);
    let g_max = mag.iter().copied().fold(0.0f32, f32::max);
    if g_max < EDGE_ABS_FLOOR {
        return Ok(Vec::new());
    }
    let edge_thr = EDGE_REL_THRESHOLD * g_max;

    // Vote: one count per (edge pixel, radius, direction sign).
    let mut acc = vec![0u32; n_r * w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = mag[i];
            if m < edge_thr {
                continue;
            }
            let dx = f64::from(gx[i]) / f64::from(m);
            let dy = f64::from(gy[i]) / f64::from(m);
            for (ri, r) in (r_min..=r_max).enumerate() {
                let rf = r as f64;
                for sign in [1.0, -1.0] {
                    let cx = (x as f64 + sign * rf * dx).round();
                    let cy = (y as f64 + sign * rf * dy).round();
                    if cx < 0.0 || cy < 0.0 || cx >= w as f64 || cy >= h as f64 {
                        continue;
                    }
                    acc[(ri * h + cy as usize) * w + cx as usize] += 1;
                }
            }
        }
    }

    // Local maxima of the raw accumulator, scored by neighbourhood mass.
    let mut candidates: Vec<CircleDetection> = Vec::new();
    for ri in 0..n_r {
        let perimeter = 2.0 * std::f64::consts::PI * (r_min + ri) as f64;
        // A peak's own count is at least 1/27 of its window mass, so cells
        // below this bound can never reach the score threshold.
        let precheck = (cfg.hough_accumulator_threshold * perimeter / 27.0) as u32;
        for y in 0..h {
            for x in 0..w {
                let votes = acc[(ri * h + y) * w + x];
                if votes == 0 || votes < precheck {
                    continue;
                }
                if !is_local_max(&acc, n_r, w, h, ri, x, y, votes) {
                    continue;
                }
                let (mass, cx, cy, r) = window_centroid(&acc, n_r, w, h, ri, x, y, r_min);
                let score = mass / perimeter;
                if score >= cfg.hough_accumulator_threshold {
                    candidates.push(CircleDetection {
                        center_x: cx,
                        center_y: cy,
                        radius: r,
                        accumulator_score: score,
                    });
                }
            }
        }
    }

    // Strongest first; exact tie-break keeps the scan order deterministic.
    candidates.sort_by(|a, b| {
        b.accumulator_score
            .partial_cmp(&a.accumulator_score)
            .unwrap()
            .then(a.radius.partial_cmp(&b.radius).unwrap())
            .then(a.center_y.partial_cmp(&b.center_y).unwrap())
            .then(a.center_x.partial_cmp(&b.center_x).unwrap())
    });

    let mut kept: Vec<CircleDetection> = Vec::new();
    for cand in candidates {
        let ok = kept.iter().all(|k| {
            let d = ((k.center_x - cand.center_x).powi(2) + (k.center_y - cand.center_y).powi(2))
                .sqrt();
            d >= cfg.hough_min_center_distance
        });
        if ok {
            kept.push(cand);
        }
    }
    Ok(kept)
}

#[allow(clippy::too_many_arguments)]
fn is_local_max(
    acc: &[u32],
    n_r: usize,
    w: usize,
    h: usize,
    ri: usize,
    x: usize,
    y: usize,
    votes: u32,
) -> bool {
    for dr in -1i64..=1 {
        let r2 = ri as i64 + dr;
        if r2 < 0 || r2 >= n_r as i64 {
            continue;
        }
        for dy in -1i64..=1 {
            let y2 = y as i64 + dy;
            if y2 < 0 || y2 >= h as i64 {
                continue;
            }
            for dx in -1i64..=1 {
                let x2 = x as i64 + dx;
                if x2 < 0 || x2 >= w as i64 {
                    continue;
                }
                if acc[(r2 as usize * h + y2 as usize) * w + x2 as usize] > votes {
                    return false;
                }
            }
        }
    }
    true
}

/// Vote mass and vote-weighted centroid of the 3x3x3 window around a peak.
fn window_centroid(
    acc: &[u32],
    n_r: usize,
    w: usize,
    h: usize,
    ri: usize,
    x: usize,
    y: usize,
    r_min: usize,
) -> (f64, f64, f64, f64) {
    let mut mass = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sr = 0.0;
    for dr in -1i64..=1 {
        let r2 = ri as i64 + dr;
        if r2 < 0 || r2 >= n_r as i64 {
            continue;
        }
        for dy in -1i64..=1 {
            let y2 = y as i64 + dy;
            if y2 < 0 || y2 >= h as i64 {
                continue;
            }
            for dx in -1i64..=1 {
                let x2 = x as i64 + dx;
                if x2 < 0 || x2 >= w as i64 {
                    continue;
                }
                let v = f64::from(acc[(r2 as usize * h + y2 as usize) * w + x2 as usize]);
                mass += v;
                sx += v * x2 as f64;
                sy += v * y2 as f64;
                sr += v * (r_min as i64 + r2) as f64;
            }
        }
    }
    (mass, sx / mass, sy / mass, sr / mass)
}

fn gaussian5(img: &Image) -> Image {
    // sigma ~= 1.4, binomial-like weights.
    const K: [f32; 5] = [0.054, 0.244, 0.404, 0.244, 0.054];
    let (w, h) = (img.width(), img.height());
    let src = img.data();
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in K.iter().enumerate() {
                let xx = (x as i64 + k as i64 - 2).clamp(0, w as i64 - 1) as usize;
                acc += kv * src[y * w + xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in K.iter().enumerate() {
                let yy = (y as i64 + k as i64 - 2).clamp(0, h as i64 - 1) as usize;
                acc += kv * tmp[yy * w + x];
            }
            out[y * w + x] = acc.clamp(0.0, 255.0);
        }
    }
    Image::new(w, h, 1, out).expect("blur preserves validity")
}

/// Sobel gradients; the 1-pixel border is left at zero.
fn sobel(img: &Image) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let (w, h) = (img.width(), img.height());
    let src = img.data();
    let mut gx = vec![0.0f32; w * h];
    let mut gy = vec![0.0f32; w * h];
    let mut mag = vec![0.0f32; w * h];
    if w < 3 || h < 3 {
        return (gx, gy, mag);
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let p = |dx: i64, dy: i64| {
                src[((y as i64 + dy) as usize) * w + (x as i64 + dx) as usize]
            };
            let sx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let sy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let i = y * w + x;
            gx[i] = sx;
            gy[i] = sy;
            mag[i] = (sx * sx + sy * sy).sqrt();
        }
    }
    (gx, gy, mag)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draw_disk(img: &mut Image, cx: f64, cy: f64, r: f64, inside: f32, soft: f64) {
        let w = img.width();
        for y in 0..img.height() {
            for x in 0..w {
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                // soft edge across [r-soft, r+soft]
                let t = ((d - r) / soft * 0.5 + 0.5).clamp(0.0, 1.0) as f32;
                let bg = img.get(x, y, 0);
                img.set(x, y, 0, inside * (1.0 - t) + bg * t);
            }
        }
    }

    fn test_cfg(r_min: usize, r_max: usize) -> SegmentationConfig {
        SegmentationConfig {
            expected_cell_diameter: 64,
            clahe_tile: 8,
            clahe_clip_limit: 2.0,
            hough_min_radius: r_min,
            hough_max_radius: r_max,
            hough_min_center_distance: 2.0 * r_min as f64,
            hough_accumulator_threshold: 1.0,
        }
    }

    #[test]
    fn blank_image_yields_no_detections() {
        let img = Image::constant(64, 64, 200.0).unwrap();
        let out = hough_circles(&img, &test_cfg(10, 20)).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn empty_radius_range_is_rejected() {
        let img = Image::constant(64, 64, 200.0).unwrap();
        let mut cfg = test_cfg(10, 20);
        cfg.hough_min_radius = 20;
        cfg.hough_max_radius = 20;
        assert!(hough_circles(&img, &cfg).is_err());
        cfg.hough_min_radius = 25;
        assert!(hough_circles(&img, &cfg).is_err());
    }

    #[test]
    fn single_circle_is_found_within_tolerance() {
        let mut img = Image::constant(100, 100, 220.0).unwrap();
        draw_disk(&mut img, 50.0, 50.0, 20.0, 90.0, 1.5);
        let out = hough_circles(&img, &test_cfg(14, 26)).unwrap();
        assert_eq!(out.len(), 1, "detections: {out:?}");
        let d = out[0];
        let center_err = ((d.center_x - 50.0).powi(2) + (d.center_y - 50.0).powi(2)).sqrt();
        assert!(center_err <= 2.0, "center error {center_err}");
        assert!((d.radius - 20.0).abs() / 20.0 <= 0.10, "radius {}", d.radius);
    }

    #[test]
    fn three_circles_are_all_recovered() {
        let mut img = Image::constant(200, 200, 225.0).unwrap();
        let truth = [(45.0, 50.0, 18.0), (140.0, 60.0, 22.0), (80.0, 150.0, 20.0)];
        for &(cx, cy, r) in &truth {
            draw_disk(&mut img, cx, cy, r, 100.0, 1.5);
        }
        let out = hough_circles(&img, &test_cfg(14, 26)).unwrap();
        assert_eq!(out.len(), 3, "detections: {out:?}");
        for &(cx, cy, r) in &truth {
            let best = out
                .iter()
                .map(|d| ((d.center_x - cx).powi(2) + (d.center_y - cy).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(best <= 2.0, "no match for ({cx},{cy},{r}): {out:?}");
        }
    }

    #[test]
    fn detections_sorted_by_score_and_spaced() {
        let mut img = Image::constant(200, 200, 225.0).unwrap();
        for &(cx, cy, r) in &[(50.0, 50.0, 20.0), (150.0, 150.0, 20.0)] {
            draw_disk(&mut img, cx, cy, r, 100.0, 1.5);
        }
        let cfg = test_cfg(14, 26);
        let out = hough_circles(&img, &cfg).unwrap();
        for pair in out.windows(2) {
            assert!(pair[0].accumulator_score >= pair[1].accumulator_score);
            let d = ((pair[0].center_x - pair[1].center_x).powi(2)
                + (pair[0].center_y - pair[1].center_y).powi(2))
            .sqrt();
            assert!(d >= cfg.hough_min_center_distance);
        }
        for det in &out {
            assert!(det.accumulator_score >= cfg.hough_accumulator_threshold);
        }
    }
}
