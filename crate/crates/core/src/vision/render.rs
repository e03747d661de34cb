use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{project, CameraIntrinsics, Frame, Projection, TargetModel};
use crate::geometry::WorldPose;

/// Gray level of the flat background.
pub const BACKGROUND_LEVEL: f64 = 200.0;
/// Gray level of the target silhouette.
pub const TARGET_LEVEL: f64 = 30.0;

const SUPERSAMPLE: usize = 8;
const TEXTURE_CELL: usize = 16;
const TEXTURE_AMPLITUDE: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Background {
    Flat,
    /// Brighter at the top, darker toward the floor.
    Gradient,
    /// Smooth value noise around the flat level.
    Textured {
        seed: u64,
    },
}

fn background(cam: &CameraIntrinsics, kind: Background) -> Vec<f64> {
    let (w, h) = (cam.width, cam.height);
    match kind {
        Background::Flat => alloc::vec![BACKGROUND_LEVEL; w * h],
        Background::Gradient => (0..w * h)
            .map(|i| {
                let row = (i / w) as f64 / (h.max(2) - 1) as f64;
                BACKGROUND_LEVEL + 30.0 - 60.0 * row
            })
            .collect(),
        Background::Textured { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (gw, gh) = (w / TEXTURE_CELL + 2, h / TEXTURE_CELL + 2);
            let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(-1.0..1.0)).collect();
            let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
            (0..w * h)
                .map(|i| {
                    let (x, y) = (
                        (i % w) as f64 / TEXTURE_CELL as f64,
                        (i / w) as f64 / TEXTURE_CELL as f64,
                    );
                    let (x0, y0) = (x as usize, y as usize);
                    let (tx, ty) = (smooth(x - x0 as f64), smooth(y - y0 as f64));
                    let l = |gx: usize, gy: usize| lattice[gy * gw + gx];
                    let top = l(x0, y0) * (1.0 - tx) + l(x0 + 1, y0) * tx;
                    let bottom = l(x0, y0 + 1) * (1.0 - tx) + l(x0 + 1, y0 + 1) * tx;
                    BACKGROUND_LEVEL + TEXTURE_AMPLITUDE * (top * (1.0 - ty) + bottom * ty)
                })
                .collect()
        }
    }
}

/// Renders the observer's view: background plus the target silhouette
/// blended by its supersampled pixel coverage.
pub fn render(
    observer: &WorldPose,
    target: &WorldPose,
    cam: &CameraIntrinsics,
    model: &TargetModel,
    kind: Background,
) -> Frame {
    let mut img = background(cam, kind);
    if let Projection::Visible(bb) = project(observer, target, cam, model) {
        // meters per pixel on the target plane
        let scale = model.width / bb.width;
        let c0 = libm::floor(bb.u - bb.width / 2.0).max(0.0) as usize;
        let c1 = (libm::ceil(bb.u + bb.width / 2.0).max(0.0) as usize).min(cam.width);
        let r0 = libm::floor(bb.v - bb.height / 2.0).max(0.0) as usize;
        let r1 = (libm::ceil(bb.v + bb.height / 2.0).max(0.0) as usize).min(cam.height);
        let step = 1.0 / SUPERSAMPLE as f64;
        for row in r0..r1 {
            for col in c0..c1 {
                let mut hits = 0usize;
                for sy in 0..SUPERSAMPLE {
                    let b = (bb.v - (row as f64 + (sy as f64 + 0.5) * step)) * scale;
                    for sx in 0..SUPERSAMPLE {
                        let a = (bb.u - (col as f64 + (sx as f64 + 0.5) * step)) * scale;
                        hits += model.contains(a, b) as usize;
                    }
                }
                let cov = hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
                let p = &mut img[row * cam.width + col];
                *p = *p * (1.0 - cov) + TARGET_LEVEL * cov;
            }
        }
    }
    let pixels = img
        .into_iter()
        .map(|v| libm::round(v).clamp(0.0, 255.0) as u8)
        .collect();
    Frame::new(cam.width, cam.height, pixels).expect("sized from the camera")
}
