use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::render::{BACKGROUND_LEVEL, TARGET_LEVEL};
use super::Frame;

/// Dark-blob detector. With explicit levels, the darkness of a pixel is
/// `(background - p) / (background - foreground)`; otherwise the background is
/// the frame median and the foreground its darkest pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobDetector {
    pub background: Option<f64>,
    pub foreground: Option<f64>,
    /// Darkness at which a pixel joins a blob.
    pub threshold: f64,
    /// Smallest background/foreground separation worth reporting, in gray levels.
    pub min_contrast: f64,
}

impl Default for BlobDetector {
    fn default() -> Self {
        Self::adaptive()
    }
}

impl BlobDetector {
    pub const fn adaptive() -> Self {
        Self {
            background: None,
            foreground: None,
            threshold: 0.5,
            min_contrast: 20.0,
        }
    }

    /// Levels of the synthetic renderer.
    pub const fn rendered() -> Self {
        Self {
            background: Some(BACKGROUND_LEVEL),
            foreground: Some(TARGET_LEVEL),
            ..Self::adaptive()
        }
    }
}

/// A detected blob in pixel units. `mass` is the darkness-weighted area,
/// i.e. the covered area in square pixels for a sharp silhouette.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub u: f64,
    pub v: f64,
    pub width: f64,
    pub height: f64,
    pub mass: f64,
    pub pixels: usize,
}

fn median(pixels: &[u8]) -> f64 {
    let mut hist = [0usize; 256];
    pixels.iter().for_each(|&p| hist[p as usize] += 1);
    let half = pixels.len().div_ceil(2);
    let mut acc = 0;
    for (v, n) in hist.iter().enumerate() {
        acc += n;
        if acc >= half {
            return v as f64;
        }
    }
    255.0
}

/// Largest 4-connected dark component, measured with darkness weights over
/// its bounding box grown by one pixel.
pub fn detect_blob(frame: &Frame, det: &BlobDetector) -> Option<Blob> {
    let (w, h) = (frame.width(), frame.height());
    let px = frame.pixels();
    if px.is_empty() {
        return None;
    }
    let bg = det.background.unwrap_or_else(|| median(px));
    let fg = det
        .foreground
        .unwrap_or_else(|| px.iter().copied().min().unwrap_or(0) as f64);
    if bg - fg < det.min_contrast {
        return None;
    }
    let dark = |i: usize| ((bg - px[i] as f64) / (bg - fg)).clamp(0.0, 1.0);
    let mask: Vec<bool> = (0..w * h).map(|i| dark(i) >= det.threshold).collect();

    let mut label = vec![usize::MAX; w * h];
    let mut best: Option<(f64, usize, [usize; 4])> = None;
    let mut stack = Vec::new();
    let mut next = 0;
    for seed in 0..w * h {
        if !mask[seed] || label[seed] != usize::MAX {
            continue;
        }
        let (mut mass, mut count) = (0.0, 0usize);
        let mut bbox = [seed % w, seed / w, seed % w, seed / w];
        label[seed] = next;
        stack.push(seed);
        while let Some(i) = stack.pop() {
            let (c, r) = (i % w, i / w);
            mass += dark(i);
            count += 1;
            bbox = [
                bbox[0].min(c),
                bbox[1].min(r),
                bbox[2].max(c),
                bbox[3].max(r),
            ];
            let mut visit = |j: usize| {
                if mask[j] && label[j] == usize::MAX {
                    label[j] = next;
                    stack.push(j);
                }
            };
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
            if r > 0 {
                visit(i - w);
            }
            if r + 1 < h {
                visit(i + w);
            }
        }
        if best.is_none_or(|b| mass > b.0) {
            best = Some((mass, count, bbox));
        }
        next += 1;
    }
    let (_, count, bbox) = best?;
    let (c0, r0) = (bbox[0].saturating_sub(1), bbox[1].saturating_sub(1));
    let (c1, r1) = ((bbox[2] + 1).min(w - 1), (bbox[3] + 1).min(h - 1));
    let (mut m, mut su, mut sv) = (0.0, 0.0, 0.0);
    let mut col_max = vec![0.0f64; c1 - c0 + 1];
    let mut row_max = vec![0.0f64; r1 - r0 + 1];
    for r in r0..=r1 {
        for c in c0..=c1 {
            let d = dark(r * w + c);
            m += d;
            su += d * (c as f64 + 0.5);
            sv += d * (r as f64 + 0.5);
            col_max[c - c0] = col_max[c - c0].max(d);
            row_max[r - r0] = row_max[r - r0].max(d);
        }
    }
    Some(Blob {
        u: su / m,
        v: sv / m,
        width: col_max.iter().sum(),
        height: row_max.iter().sum(),
        mass: m,
        pixels: count,
    })
}
