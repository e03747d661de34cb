//! Relative and world poses.

use core::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = libm::fmod(a, TAU);
    if r > PI {
        r -= TAU;
    } else if r <= -PI {
        r += TAU;
    }
    r
}

/// Pose of the target in the observer's body frame: `x` forward, `y` left,
/// `z` up (meters) and relative yaw `phi` (radians).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub phi: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, phi: f64) -> Self {
        Self {
            x,
            y,
            z,
            phi: wrap_angle(phi),
        }
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.z, self.phi]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Absolute pose in the world frame (meters, yaw in radians).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

impl WorldPose {
    pub const fn new(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self { x, y, z, yaw }
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Rotates a world-frame vector into a body frame with the given yaw.
pub fn world_to_body(v: [f64; 3], yaw: f64) -> [f64; 3] {
    let (s, c) = libm::sincos(yaw);
    [c * v[0] + s * v[1], -s * v[0] + c * v[1], v[2]]
}

pub fn body_to_world(v: [f64; 3], yaw: f64) -> [f64; 3] {
    let (s, c) = libm::sincos(yaw);
    [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
}

/// Pose of `target` expressed in the body frame of `observer`.
pub fn relative_pose(observer: &WorldPose, target: &WorldPose) -> Pose {
    let d = [
        target.x - observer.x,
        target.y - observer.y,
        target.z - observer.z,
    ];
    let b = world_to_body(d, observer.yaw);
    Pose::new(b[0], b[1], b[2], target.yaw - observer.yaw)
}
