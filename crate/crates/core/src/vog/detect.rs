//! Threshold-based pupil and glint detection.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::scene::Frame;

/// Connected region of a binary mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    /// Intensity-weighted centroid in pixel coordinates (pixel centres at `+0.5`).
    pub x: f64,
    pub y: f64,
    pub area: usize,
}

/// A detected feature position. Invalid detections carry `NaN` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub x: f64,
    pub y: f64,
    pub valid: bool,
}

impl Detection {
    pub fn invalid() -> Self {
        Self { x: f64::NAN, y: f64::NAN, valid: false }
    }

    fn at(x: f64, y: f64) -> Self {
        Self { x, y, valid: true }
    }
}

/// Labels 4-connected components of `mask`. Returns per-pixel labels
/// (0 = background) and the pixel lists of each component, in scan order.
fn label_components(mask: &[bool], width: usize, height: usize) -> (Vec<u32>, Vec<Vec<usize>>) {
    let mut labels = vec![0u32; mask.len()];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        let id = components.len() as u32 + 1;
        let mut pixels = Vec::new();
        labels[start] = id;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            pixels.push(p);
            let (x, y) = (p % width, p / width);
            let mut visit = |q: usize| {
                if mask[q] && labels[q] == 0 {
                    labels[q] = id;
                    queue.push_back(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < width {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - width);
            }
            if y + 1 < height {
                visit(p + width);
            }
        }
        components.push(pixels);
    }
    (labels, components)
}

fn weighted_centroid(pixels: impl Iterator<Item = (usize, f64)>, width: usize) -> Option<(f64, f64)> {
    let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
    for (p, w) in pixels {
        sx += w * ((p % width) as f64 + 0.5);
        sy += w * ((p / width) as f64 + 0.5);
        sw += w;
    }
    (sw > 0.0).then(|| (sx / sw, sy / sw))
}

/// Pixels enclosed by `region` (e.g. glints inside the pupil): complement
/// components inside the region's bounding box that do not touch its edge.
fn enclosed_holes(region: &[usize], width: usize) -> Vec<usize> {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for &p in region {
        let (x, y) = (p % width, p / width);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let (bw, bh) = (x1 - x0 + 1, y1 - y0 + 1);
    let mut inside = vec![false; bw * bh];
    for &p in region {
        inside[(p / width - y0) * bw + (p % width - x0)] = true;
    }
    let complement: Vec<bool> = inside.iter().map(|v| !v).collect();
    let (_, comps) = label_components(&complement, bw, bh);
    comps
        .into_iter()
        .filter(|c| c.iter().all(|&q| {
            let (x, y) = (q % bw, q / bw);
            x > 0 && y > 0 && x + 1 < bw && y + 1 < bh
        }))
        .flatten()
        .map(|q| (q / bw + y0) * width + (q % bw + x0))
        .collect()
}

/// Default minimum pupil size, pixels.
pub const MIN_PUPIL_PIXELS: usize = 20;

/// Centre of the largest dark region (`intensity < threshold`), weighted by
/// `threshold - intensity`. Enclosed holes (glints) count as pupil with the
/// region's maximum weight.
pub fn detect_pupil_center(frame: &Frame, threshold: f64) -> Detection {
    detect_pupil_center_with(frame, threshold, MIN_PUPIL_PIXELS)
}

pub fn detect_pupil_center_with(frame: &Frame, threshold: f64, min_pixels: usize) -> Detection {
    let mask: Vec<bool> = frame.intensities.iter().map(|&v| v < threshold).collect();
    let (_, comps) = label_components(&mask, frame.width, frame.height);
    let Some(region) = comps.into_iter().max_by_key(Vec::len) else {
        return Detection::invalid();
    };
    if region.len() < min_pixels {
        return Detection::invalid();
    }
    let weight = |p: usize| threshold - frame.intensities[p];
    let max_w = region.iter().map(|&p| weight(p)).fold(0.0, f64::max);
    let holes = enclosed_holes(&region, frame.width);
    let pixels = region.iter().map(|&p| (p, weight(p))).chain(holes.into_iter().map(|p| (p, max_w)));
    match weighted_centroid(pixels, frame.width) {
        Some((x, y)) => Detection::at(x, y),
        None => Detection::invalid(),
    }
}

/// All bright regions (`intensity > threshold`), weighted by
/// `intensity - threshold`, sorted by x.
pub fn detect_glints(frame: &Frame, threshold: f64) -> Vec<Blob> {
    let mask: Vec<bool> = frame.intensities.iter().map(|&v| v > threshold).collect();
    let (_, comps) = label_components(&mask, frame.width, frame.height);
    let mut blobs: Vec<Blob> = comps
        .into_iter()
        .filter_map(|c| {
            let area = c.len();
            weighted_centroid(c.into_iter().map(|p| (p, frame.intensities[p] - threshold)), frame.width)
                .map(|(x, y)| Blob { x, y, area })
        })
        .collect();
    blobs.sort_by(|a, b| a.x.total_cmp(&b.x));
    blobs
}

/// The glint whose centroid is nearest `pc`.
pub fn detect_corneal_reflection(frame: &Frame, threshold: f64, pc: (f64, f64)) -> Detection {
    nearest_blob(&detect_glints(frame, threshold), pc)
        .map(|b| Detection::at(b.x, b.y))
        .unwrap_or_else(Detection::invalid)
}

pub(crate) fn nearest_blob(blobs: &[Blob], pc: (f64, f64)) -> Option<&Blob> {
    let d2 = |b: &Blob| (b.x - pc.0).powi(2) + (b.y - pc.1).powi(2);
    blobs.iter().min_by(|a, b| d2(a).total_cmp(&d2(b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(frame: &mut Frame, x0: usize, y0: usize, side: usize, v: f64) {
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                frame.set(x, y, v);
            }
        }
    }

    #[test]
    fn components_are_four_connected() {
        // Two diagonal pixels are separate components.
        let mask = [true, false, false, true];
        let (labels, comps) = label_components(&mask, 2, 2);
        assert_eq!(comps.len(), 2);
        assert_ne!(labels[0], labels[3]);
    }

    #[test]
    fn largest_dark_region_wins() {
        let mut f = Frame::filled(60, 40, 0.9);
        square(&mut f, 5, 5, 4, 0.0); // 16 px
        square(&mut f, 30, 10, 10, 0.05); // 100 px, centre (35, 15)
        let d = detect_pupil_center(&f, 0.15);
        assert!(d.valid);
        assert!((d.x - 35.0).abs() < 1e-12 && (d.y - 15.0).abs() < 1e-12, "{d:?}");
    }

    #[test]
    fn holes_do_not_bias_the_pupil() {
        let mut f = Frame::filled(60, 40, 0.9);
        square(&mut f, 20, 10, 12, 0.05); // centre (26, 16)
        square(&mut f, 27, 17, 2, 1.0); // glint off-centre inside
        let d = detect_pupil_center(&f, 0.15);
        assert!((d.x - 26.0).abs() < 1e-12 && (d.y - 16.0).abs() < 1e-12, "{d:?}");
    }

    #[test]
    fn bright_or_tiny_frames_are_invalid() {
        let f = Frame::filled(30, 30, 0.9);
        assert!(!detect_pupil_center(&f, 0.15).valid);
        let mut g = f.clone();
        square(&mut g, 3, 3, 4, 0.0);
        assert!(!detect_pupil_center(&g, 0.15).valid);
        assert!(!detect_corneal_reflection(&f, 0.97, (15.0, 15.0)).valid);
    }

    #[test]
    fn nearest_glint_is_selected() {
        let mut f = Frame::filled(60, 40, 0.45);
        square(&mut f, 10, 10, 3, 1.0); // centre (11.5, 11.5)
        square(&mut f, 40, 10, 3, 1.0); // centre (41.5, 11.5)
        let glints = detect_glints(&f, 0.97);
        assert_eq!(glints.len(), 2);
        assert!(glints[0].x < glints[1].x);
        let d = detect_corneal_reflection(&f, 0.97, (35.0, 12.0));
        assert!((d.x - 41.5).abs() < 1e-12 && (d.y - 11.5).abs() < 1e-12);
    }
}
