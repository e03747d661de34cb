use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Frame, VisionError};

/// Closed interval of a sampled parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub const fn fixed(v: f64) -> Self {
        Self { min: v, max: v }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..=self.max)
        } else {
            // keep the stream aligned with the non-degenerate case
            let _: f64 = rng.random();
            self.min
        }
    }

    fn valid(&self, lo: f64, hi: f64) -> bool {
        self.min.is_finite()
            && self.max.is_finite()
            && lo <= self.min
            && self.min <= self.max
            && self.max <= hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentProbabilities {
    pub exposure: f64,
    pub gamma: f64,
    pub dynamic_range: f64,
    pub blur: f64,
    pub vignette: f64,
    pub noise: f64,
}

impl AugmentProbabilities {
    pub const fn all(p: f64) -> Self {
        Self {
            exposure: p,
            gamma: p,
            dynamic_range: p,
            blur: p,
            vignette: p,
            noise: p,
        }
    }
}

impl Default for AugmentProbabilities {
    fn default() -> Self {
        Self::all(0.5)
    }
}

/// Parameter ranges of the photometric augmentations, applied in the order
/// exposure, gamma, dynamic range, blur, vignette, noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationConfig {
    /// Multiplicative gain.
    pub exposure: Range,
    /// Exponent on normalized intensity.
    pub gamma: Range,
    /// Contrast factor around mid-gray; below 1 compresses.
    pub dynamic_range: Range,
    /// Odd binomial kernel sizes.
    pub blur_kernels: Vec<usize>,
    /// Relative darkening at the frame corners.
    pub vignette: Range,
    /// Gaussian noise standard deviation in gray levels.
    pub noise_sigma: Range,
    pub probability: AugmentProbabilities,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            exposure: Range::new(0.6, 1.6),
            gamma: Range::new(0.6, 1.6),
            dynamic_range: Range::new(0.6, 1.0),
            blur_kernels: vec![1, 3, 5],
            vignette: Range::new(0.0, 0.4),
            noise_sigma: Range::new(0.0, 8.0),
            probability: AugmentProbabilities::default(),
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    /// Every augmentation disabled.
    pub fn identity() -> Self {
        Self {
            probability: AugmentProbabilities::all(0.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), VisionError> {
        let p = &self.probability;
        let probs = [
            p.exposure,
            p.gamma,
            p.dynamic_range,
            p.blur,
            p.vignette,
            p.noise,
        ];
        if probs.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(VisionError::BadRange("probability"));
        }
        let checks = [
            (self.exposure.valid(0.0, 16.0), "exposure"),
            (self.gamma.valid(1e-3, 16.0), "gamma"),
            (self.dynamic_range.valid(0.0, 4.0), "dynamic_range"),
            (self.vignette.valid(0.0, 1.0), "vignette"),
            (self.noise_sigma.valid(0.0, 128.0), "noise_sigma"),
            (
                !self.blur_kernels.is_empty()
                    && self.blur_kernels.iter().all(|k| k % 2 == 1 && *k <= 9),
                "blur_kernels",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, name)) => Err(VisionError::BadRange(name)),
            None => Ok(()),
        }
    }
}

fn binomial(k: usize) -> Vec<f64> {
    let mut row = vec![1.0f64];
    for _ in 1..k {
        let mut next = vec![1.0; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    let s: f64 = row.iter().sum();
    row.iter().map(|v| v / s).collect()
}

fn blur(img: &[f64], w: usize, h: usize, k: usize) -> Vec<f64> {
    let kern = binomial(k);
    let r = (k / 2) as isize;
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        (0..w * h)
            .map(|i| {
                let (c, row) = ((i % w) as isize, (i / w) as isize);
                kern.iter()
                    .enumerate()
                    .map(|(j, kv)| {
                        let d = j as isize - r;
                        let (cc, rr) = if horizontal {
                            ((c + d).clamp(0, w as isize - 1), row)
                        } else {
                            (c, (row + d).clamp(0, h as isize - 1))
                        };
                        kv * src[rr as usize * w + cc as usize]
                    })
                    .sum()
            })
            .collect()
    };
    pass(&pass(img, true), false)
}

/// Applies each augmentation with its probability. Both the decision and
/// the parameter are drawn for every step, so the random stream consumed
/// before the noise step does not depend on which steps fired.
pub fn augment(frame: &Frame, cfg: &AugmentationConfig, rng: &mut impl Rng) -> Frame {
    let (w, h) = (frame.width(), frame.height());
    let mut img: Vec<f64> = frame.pixels().iter().map(|&p| p as f64).collect();
    let clamp = |img: &mut Vec<f64>| img.iter_mut().for_each(|v| *v = v.clamp(0.0, 255.0));
    let p = &cfg.probability;

    let (on, gain) = (rng.random_bool(p.exposure), cfg.exposure.sample(rng));
    if on {
        img.iter_mut().for_each(|v| *v *= gain);
        clamp(&mut img);
    }
    let (on, gamma) = (rng.random_bool(p.gamma), cfg.gamma.sample(rng));
    if on {
        img.iter_mut()
            .for_each(|v| *v = 255.0 * libm::pow(*v / 255.0, gamma));
    }
    let (on, k) = (
        rng.random_bool(p.dynamic_range),
        cfg.dynamic_range.sample(rng),
    );
    if on {
        img.iter_mut().for_each(|v| *v = 128.0 + (*v - 128.0) * k);
        clamp(&mut img);
    }
    let (on, ksize) = (
        rng.random_bool(p.blur),
        cfg.blur_kernels[rng.random_range(0..cfg.blur_kernels.len())],
    );
    if on && ksize > 1 {
        img = blur(&img, w, h, ksize);
    }
    let (on, strength) = (rng.random_bool(p.vignette), cfg.vignette.sample(rng));
    if on {
        let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
        let r2max = cx * cx + cy * cy;
        for (i, v) in img.iter_mut().enumerate() {
            let (dx, dy) = ((i % w) as f64 + 0.5 - cx, (i / w) as f64 + 0.5 - cy);
            *v *= 1.0 - strength * (dx * dx + dy * dy) / r2max;
        }
    }
    let (on, sigma) = (rng.random_bool(p.noise), cfg.noise_sigma.sample(rng));
    if on && sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("validated sigma");
        img.iter_mut().for_each(|v| *v += normal.sample(rng));
    }
    let pixels = img
        .into_iter()
        .map(|v| libm::round(v).clamp(0.0, 255.0) as u8)
        .collect();
    Frame::new(w, h, pixels).expect("same size")
}
