use alloc::boxed::Box;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::{relative_pose, Pose, WorldPose};
use crate::quant::{crop_pixels, IntNetwork, QTensor, CROP_HEIGHT, FRAME_SIZE};
use crate::vision::{
    detect_blob, project, render, Background, Blob, BlobDetector, CameraIntrinsics, Projection,
    TargetModel,
};

/// Ground truth corrupted by zero-mean Gaussian noise. With a positive
/// correlation time the noise is a first-order autoregressive process per
/// axis; with `target_rmse` set, the whole episode's sequence is rescaled so
/// its realized root-mean-square over all axes equals that value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleNoise {
    pub sigma: [f64; 3],
    pub correlation_time: f64,
    pub target_rmse: Option<f64>,
}

impl Default for OracleNoise {
    fn default() -> Self {
        Self {
            sigma: [0.0; 3],
            correlation_time: 0.0,
            target_rmse: None,
        }
    }
}

impl OracleNoise {
    /// The noise used for the calibrated closed-loop runs.
    pub fn calibrated(rmse: f64) -> Self {
        Self {
            sigma: [1.0; 3],
            correlation_time: 0.25,
            target_rmse: Some(rmse),
        }
    }

    /// Draws the noise for `ticks` perception events spaced `dt` apart.
    pub fn generate(&self, ticks: usize, dt: f64, rng: &mut impl Rng) -> Vec<[f64; 3]> {
        let rho = if self.correlation_time > 0.0 {
            libm::exp(-dt / self.correlation_time)
        } else {
            0.0
        };
        let innov = libm::sqrt(1.0 - rho * rho);
        let mut state = [0.0f64; 3];
        let mut out = Vec::with_capacity(ticks);
        for k in 0..ticks {
            for s in state.iter_mut() {
                let n: f64 = StandardNormal.sample(rng);
                *s = if k == 0 { n } else { rho * *s + innov * n };
            }
            out.push(core::array::from_fn(|i| state[i] * self.sigma[i]));
        }
        if let Some(target) = self.target_rmse {
            let ms = out.iter().flatten().map(|v| v * v).sum::<f64>() / (3 * ticks.max(1)) as f64;
            if ms > 0.0 {
                let k = target / libm::sqrt(ms);
                out.iter_mut().flatten().for_each(|v| *v *= k);
            }
        }
        out
    }

    /// Per-axis standard deviation the filter should assume.
    pub fn effective_sigma(&self) -> [f64; 3] {
        match self.target_rmse {
            Some(t) => {
                let ms = self.sigma.iter().map(|s| s * s).sum::<f64>() / 3.0;
                if ms > 0.0 {
                    self.sigma.map(|s| s * t / libm::sqrt(ms))
                } else {
                    [0.0; 3]
                }
            }
            None => self.sigma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlobPinhole {
    pub camera: CameraIntrinsics,
    pub target: TargetModel,
    pub detector: BlobDetector,
    pub background: Background,
    /// Measurement standard deviation assumed by the filter.
    pub sigma: [f64; 3],
}

impl Default for BlobPinhole {
    fn default() -> Self {
        Self {
            camera: CameraIntrinsics::default(),
            target: TargetModel::default(),
            detector: BlobDetector::rendered(),
            background: Background::Flat,
            sigma: [0.03, 0.01, 0.01],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PerceptionModel {
    Oracle(OracleNoise),
    BlobPinhole(BlobPinhole),
    /// An integer network fed the cropped rendered frame.
    Cnn {
        network: Box<IntNetwork>,
        render: BlobPinhole,
    },
}

impl PerceptionModel {
    pub fn measurement_sigma(&self) -> [f64; 3] {
        match self {
            Self::Oracle(o) => o.effective_sigma(),
            Self::BlobPinhole(b) => b.sigma,
            Self::Cnn { render, .. } => render.sigma,
        }
    }
}

/// Inverts the pinhole model: depth from the darkness mass against the
/// silhouette area `area` (m^2), lateral offsets from the centroid.
pub fn estimate_pose_from_blob(blob: &Blob, cam: &CameraIntrinsics, area: f64) -> Pose {
    let x = cam.focal_px * libm::sqrt(area / blob.mass);
    Pose::new(
        x,
        (cam.cx - blob.u) * x / cam.focal_px,
        (cam.cy - blob.v) * x / cam.focal_px,
        0.0,
    )
}

/// Per-episode perception state.
pub struct Perceiver<'a> {
    model: &'a PerceptionModel,
    area: f64,
    noise: Vec<[f64; 3]>,
    tick: usize,
}

impl<'a> Perceiver<'a> {
    /// `ticks` and `dt` size the pre-drawn oracle noise; other models ignore them.
    pub fn new(model: &'a PerceptionModel, ticks: usize, dt: f64, rng: &mut impl Rng) -> Self {
        let (area, noise) = match model {
            PerceptionModel::Oracle(o) => (0.0, o.generate(ticks, dt, rng)),
            PerceptionModel::BlobPinhole(b) | PerceptionModel::Cnn { render: b, .. } => {
                (b.target.area(), Vec::new())
            }
        };
        Self {
            model,
            area,
            noise,
            tick: 0,
        }
    }

    /// One perception event. `None` when the target is not seen.
    pub fn perceive(&mut self, observer: &WorldPose, target: &WorldPose) -> Option<Pose> {
        let tick = self.tick;
        self.tick += 1;
        match self.model {
            PerceptionModel::Oracle(_) => {
                let cam = CameraIntrinsics::default();
                if project(observer, target, &cam, &TargetModel::default()) == Projection::OutOfView
                {
                    return None;
                }
                let rel = relative_pose(observer, target);
                let n = self.noise.get(tick).copied().unwrap_or([0.0; 3]);
                Some(Pose::new(rel.x + n[0], rel.y + n[1], rel.z + n[2], rel.phi))
            }
            PerceptionModel::BlobPinhole(b) => {
                let frame = render(observer, target, &b.camera, &b.target, b.background);
                let blob = detect_blob(&frame, &b.detector)?;
                Some(estimate_pose_from_blob(&blob, &b.camera, self.area))
            }
            PerceptionModel::Cnn { network, render: b } => {
                if project(observer, target, &b.camera, &b.target) == Projection::OutOfView {
                    return None;
                }
                let frame = render(observer, target, &b.camera, &b.target, b.background);
                let crop = crop_pixels(frame.pixels()).ok()?;
                let input = QTensor::from_gray(CROP_HEIGHT, FRAME_SIZE, &crop).ok()?;
                network.infer(&input).ok()
            }
        }
    }
}
