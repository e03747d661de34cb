//! Pinhole camera, target silhouette, frame rendering, blob detection and
//! photometric augmentation.

mod augment;
mod blob;
mod render;

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::{relative_pose, WorldPose};

pub use augment::{augment, AugmentProbabilities, AugmentationConfig, Range};
pub use blob::{detect_blob, Blob, BlobDetector};
pub use render::{render, Background, BACKGROUND_LEVEL, TARGET_LEVEL};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VisionError {
    #[error("frame buffer has {found} pixels, expected {expected}")]
    BadFrame { expected: usize, found: usize },
    #[error("camera intrinsics: {0}")]
    BadCamera(&'static str),
    #[error("augmentation range `{0}` is empty or invalid")]
    BadRange(&'static str),
}

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, VisionError> {
        if pixels.len() != width * height {
            return Err(VisionError::BadFrame {
                expected: width * height,
                found: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.pixels[row * self.width + col]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraIntrinsics {
    pub focal_px: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            focal_px: 72.0,
            cx: 80.0,
            cy: 80.0,
            width: 160,
            height: 160,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), VisionError> {
        if !(self.focal_px > 0.0 && self.focal_px.is_finite()) {
            return Err(VisionError::BadCamera("focal length must be positive"));
        }
        let inside = |c: f64, n: usize| c >= 0.0 && c <= n as f64;
        if self.width == 0
            || self.height == 0
            || !inside(self.cx, self.width)
            || !inside(self.cy, self.height)
        {
            return Err(VisionError::BadCamera(
                "principal point must lie inside the frame",
            ));
        }
        Ok(())
    }

    /// Image coordinates of a body-frame point (`x` forward, `y` left, `z` up).
    /// `None` for points not in front of the camera.
    pub fn project_point(&self, p: [f64; 3]) -> Option<(f64, f64)> {
        (p[0] > MIN_DEPTH).then(|| {
            (
                self.cx - self.focal_px * p[1] / p[0],
                self.cy - self.focal_px * p[2] / p[0],
            )
        })
    }
}

/// Points closer than this are treated as behind the image plane.
pub const MIN_DEPTH: f64 = 1e-3;

/// Physical extent and silhouette of the target as seen from the front:
/// an elliptical body plus four rotor discs, in meters around the center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetModel {
    pub width: f64,
    pub height: f64,
    pub body_semi_axes: (f64, f64),
    pub rotor_radius: f64,
    /// Rotor centers at `(+-a, +-b)`.
    pub rotor_offset: (f64, f64),
}

impl Default for TargetModel {
    fn default() -> Self {
        Self {
            width: 0.10,
            height: 0.044,
            body_semi_axes: (0.03, 0.022),
            rotor_radius: 0.012,
            rotor_offset: (0.038, 0.010),
        }
    }
}

impl TargetModel {
    /// Whether the silhouette covers the point `(a, b)` (horizontal, vertical).
    pub fn contains(&self, a: f64, b: f64) -> bool {
        let (ea, eb) = self.body_semi_axes;
        if (a / ea) * (a / ea) + (b / eb) * (b / eb) <= 1.0 {
            return true;
        }
        let (ra, rb) = self.rotor_offset;
        let (da, db) = (libm::fabs(a) - ra, libm::fabs(b) - rb);
        da * da + db * db <= self.rotor_radius * self.rotor_radius
    }

    /// Silhouette area in square meters by midpoint integration on a fine grid.
    pub fn area(&self) -> f64 {
        const N: usize = 1000;
        let (w, h) = (self.width, self.height);
        let (da, db) = (w / N as f64, h / N as f64);
        let mut hits = 0u64;
        for i in 0..N {
            let a = -w / 2.0 + (i as f64 + 0.5) * da;
            for j in 0..N {
                let b = -h / 2.0 + (j as f64 + 0.5) * db;
                hits += self.contains(a, b) as u64;
            }
        }
        hits as f64 * da * db
    }
}

/// Projected target extent in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub u: f64,
    pub v: f64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Projection {
    Visible(BoundingBox),
    OutOfView,
}

/// Pinhole projection of the target seen from the observer. The silhouette
/// is taken fronto-parallel, so relative yaw does not change its extent.
pub fn project(
    observer: &WorldPose,
    target: &WorldPose,
    cam: &CameraIntrinsics,
    model: &TargetModel,
) -> Projection {
    let rel = relative_pose(observer, target);
    let Some((u, v)) = cam.project_point(rel.position()) else {
        return Projection::OutOfView;
    };
    let bb = BoundingBox {
        u,
        v,
        width: cam.focal_px * model.width / rel.x,
        height: cam.focal_px * model.height / rel.x,
    };
    let off = bb.u + bb.width / 2.0 <= 0.0
        || bb.u - bb.width / 2.0 >= cam.width as f64
        || bb.v + bb.height / 2.0 <= 0.0
        || bb.v - bb.height / 2.0 >= cam.height as f64;
    if off {
        Projection::OutOfView
    } else {
        Projection::Visible(bb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn facing(x: f64, y: f64, z: f64) -> (WorldPose, WorldPose) {
        (
            WorldPose::new(0.0, 0.0, 0.0, 0.0),
            WorldPose::new(x, y, z, PI),
        )
    }

    #[test]
    fn apparent_widths() {
        let cam = CameraIntrinsics::default();
        let m = TargetModel::default();
        let (o, t) = facing(0.4, 0.0, 0.0);
        let Projection::Visible(bb) = project(&o, &t, &cam, &m) else {
            panic!()
        };
        assert!((bb.width - 18.0).abs() < 1e-9);
        assert!((bb.height - 7.92).abs() < 1e-9);
        let (o, t) = facing(1.5, 0.0, 0.0);
        let Projection::Visible(bb) = project(&o, &t, &cam, &m) else {
            panic!()
        };
        assert!((bb.width - 4.8).abs() < 1e-9);
    }

    #[test]
    fn far_and_behind() {
        let cam = CameraIntrinsics::default();
        let m = TargetModel::default();
        let (o, t) = facing(1e9, 0.5, -0.3);
        let Projection::Visible(bb) = project(&o, &t, &cam, &m) else {
            panic!()
        };
        assert!((bb.u - 80.0).abs() < 1e-6 && (bb.v - 80.0).abs() < 1e-6 && bb.width < 1e-6);
        let (o, t) = facing(-0.5, 0.0, 0.0);
        assert_eq!(project(&o, &t, &cam, &m), Projection::OutOfView);
    }

    #[test]
    fn silhouette_extent_and_area() {
        let m = TargetModel::default();
        assert!(m.contains(0.0, 0.0) && m.contains(0.049, 0.010) && !m.contains(0.051, 0.010));
        assert!(m.contains(0.0, 0.0219) && !m.contains(0.0, 0.0221));
        let a = m.area();
        assert!(a > 0.002 && a < m.width * m.height);
    }
}
