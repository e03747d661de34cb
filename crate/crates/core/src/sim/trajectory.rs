use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::{wrap_angle, WorldPose};

/// Axis-aligned box the drones must stay inside, relative to the observer start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlightVolume {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for FlightVolume {
    fn default() -> Self {
        Self {
            min: [-1.5, -1.5, -1.0],
            max: [3.5, 1.5, 1.0],
        }
    }
}

impl FlightVolume {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

/// Target receding along `x` while circling in the `y`-`z` plane with a
/// radius that breathes between `r_min` and `r_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpiralParams {
    pub x0: f64,
    pub x_rate: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Period of the radius oscillation, seconds.
    pub period: f64,
    /// Angular rate of the circling, rad/s.
    pub omega: f64,
}

impl Default for SpiralParams {
    fn default() -> Self {
        Self {
            x0: 0.2,
            x_rate: 0.03,
            r_min: 0.15,
            r_max: 0.6,
            period: 20.0,
            omega: 0.8,
        }
    }
}

impl SpiralParams {
    pub fn radius(&self, t: f64) -> f64 {
        self.r_min + (self.r_max - self.r_min) * (1.0 - libm::cos(TAU * t / self.period)) / 2.0
    }
}

/// Both drones on one horizontal circle, facing each other.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FacingCirclesParams {
    pub center: [f64; 3],
    pub radius: f64,
    /// Target height above the observer.
    pub relative_height: f64,
    /// Angular separation of the drones on the circle.
    pub angular_offset: f64,
    pub omega: f64,
}

impl Default for FacingCirclesParams {
    fn default() -> Self {
        Self {
            center: [1.0, 0.0, 0.0],
            radius: 0.7,
            relative_height: 0.0,
            angular_offset: PI,
            omega: 0.3,
        }
    }
}

/// Static observer at the origin facing `+x`; the target circles in the
/// vertical plane `x = distance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerticalCirclesParams {
    pub distance: f64,
    /// `(y, z)` of the circle center.
    pub center: [f64; 2],
    pub radius: f64,
    pub omega: f64,
}

impl Default for VerticalCirclesParams {
    fn default() -> Self {
        Self {
            distance: 1.0,
            center: [0.0, 0.0],
            radius: 0.3,
            omega: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub pose: WorldPose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrajectoryKind {
    Spiral(SpiralParams),
    /// Target side of the facing-circles pattern.
    FacingCircles(FacingCirclesParams),
    /// Observer side of the facing-circles pattern.
    FacingCirclesObserver(FacingCirclesParams),
    VerticalCircles(VerticalCirclesParams),
    /// Piecewise-linear through time-ordered waypoints, holding the ends.
    Waypoints(Vec<Waypoint>),
}

/// A continuous pose as a function of time over `[0, duration]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub duration: f64,
}

fn circle_pose(p: &FacingCirclesParams, angle: f64, z: f64) -> WorldPose {
    let (s, c) = libm::sincos(angle);
    WorldPose::new(
        p.center[0] + p.radius * c,
        p.center[1] + p.radius * s,
        z,
        wrap_angle(angle + PI),
    )
}

impl Trajectory {
    pub fn pose(&self, t: f64) -> WorldPose {
        match &self.kind {
            TrajectoryKind::Spiral(p) => {
                let r = p.radius(t);
                let (s, c) = libm::sincos(p.omega * t);
                WorldPose::new(p.x0 + p.x_rate * t, r * c, r * s, PI)
            }
            TrajectoryKind::FacingCircles(p) => {
                let a = p.omega * t + p.angular_offset;
                let mut pose = circle_pose(p, a, p.center[2] + p.relative_height);
                // face the observer, which sits at angle omega * t
                let obs = circle_pose(p, p.omega * t, p.center[2]);
                pose.yaw = libm::atan2(obs.y - pose.y, obs.x - pose.x);
                pose
            }
            TrajectoryKind::FacingCirclesObserver(p) => {
                let mut pose = circle_pose(p, p.omega * t, p.center[2]);
                let tgt = circle_pose(p, p.omega * t + p.angular_offset, p.center[2]);
                pose.yaw = libm::atan2(tgt.y - pose.y, tgt.x - pose.x);
                pose
            }
            TrajectoryKind::VerticalCircles(p) => {
                let (s, c) = libm::sincos(p.omega * t);
                WorldPose::new(
                    p.distance,
                    p.center[0] + p.radius * c,
                    p.center[1] + p.radius * s,
                    PI,
                )
            }
            TrajectoryKind::Waypoints(w) => {
                let Some(first) = w.first() else {
                    return WorldPose::default();
                };
                if t <= first.t {
                    return first.pose;
                }
                for pair in w.windows(2) {
                    let (a, b) = (pair[0], pair[1]);
                    if t <= b.t {
                        let f = if b.t > a.t {
                            (t - a.t) / (b.t - a.t)
                        } else {
                            1.0
                        };
                        let lerp = |u: f64, v: f64| u + (v - u) * f;
                        return WorldPose::new(
                            lerp(a.pose.x, b.pose.x),
                            lerp(a.pose.y, b.pose.y),
                            lerp(a.pose.z, b.pose.z),
                            a.pose.yaw + wrap_angle(b.pose.yaw - a.pose.yaw) * f,
                        );
                    }
                }
                w[w.len() - 1].pose
            }
        }
    }

    /// Checks that sampled positions stay inside `volume`.
    pub fn check_volume(&self, volume: &FlightVolume, dt: f64) -> Result<(), SimError> {
        let n = libm::ceil(self.duration / dt) as usize;
        for i in 0..=n {
            let t = (i as f64 * dt).min(self.duration);
            let p = self.pose(t);
            if !volume.contains(p.position()) {
                return Err(SimError::OutsideVolume {
                    what: "target",
                    t,
                    position: p.position(),
                });
            }
        }
        Ok(())
    }
}

pub fn gen_spiral(params: SpiralParams, duration: f64) -> Trajectory {
    Trajectory {
        kind: TrajectoryKind::Spiral(params),
        duration,
    }
}

/// Facing-circles pattern as `(observer, target)`.
pub fn gen_facing_circles(params: FacingCirclesParams, duration: f64) -> (Trajectory, Trajectory) {
    (
        Trajectory {
            kind: TrajectoryKind::FacingCirclesObserver(params),
            duration,
        },
        Trajectory {
            kind: TrajectoryKind::FacingCircles(params),
            duration,
        },
    )
}

/// Vertical-circles pattern as `(observer, target)`; the observer hovers at the origin.
pub fn gen_vertical_circles(
    params: VerticalCirclesParams,
    duration: f64,
) -> (Trajectory, Trajectory) {
    (
        Trajectory {
            kind: TrajectoryKind::Waypoints(alloc::vec![Waypoint {
                t: 0.0,
                pose: WorldPose::default(),
            }]),
            duration,
        },
        Trajectory {
            kind: TrajectoryKind::VerticalCircles(params),
            duration,
        },
    )
}

/// A target hovering at `pose`.
pub fn stationary(pose: WorldPose, duration: f64) -> Trajectory {
    Trajectory {
        kind: TrajectoryKind::Waypoints(alloc::vec![Waypoint { t: 0.0, pose }]),
        duration,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::relative_pose;

    #[test]
    fn spiral_start_and_monotone_x() {
        let tr = gen_spiral(SpiralParams::default(), 60.0);
        let p0 = tr.pose(0.0);
        assert_eq!(p0.x, 0.2);
        assert!((p0.y.hypot(p0.z) - 0.15).abs() < 1e-12);
        let mut last = f64::NEG_INFINITY;
        for i in 0..=6000 {
            let x = tr.pose(i as f64 * 0.01).x;
            assert!(x >= last);
            last = x;
        }
        assert!((tr.pose(60.0).x - 2.0).abs() < 1e-12);
        assert!(tr.check_volume(&FlightVolume::default(), 0.01).is_ok());
    }

    #[test]
    fn spiral_radius_alternates() {
        let p = SpiralParams::default();
        for k in 0..3 {
            let t = k as f64 * p.period;
            assert!((p.radius(t) - p.r_min).abs() < 1e-12);
            assert!((p.radius(t + p.period / 2.0) - p.r_max).abs() < 1e-12);
        }
    }

    #[test]
    fn facing_circles_geometry() {
        let params = FacingCirclesParams {
            relative_height: 0.25,
            ..FacingCirclesParams::default()
        };
        let (obs, tgt) = gen_facing_circles(params, 30.0);
        for i in 0..100 {
            let t = i as f64 * 0.3;
            let (o, g) = (obs.pose(t), tgt.pose(t));
            assert!(((o.x - g.x).hypot(o.y - g.y) - 2.0 * params.radius).abs() < 1e-9);
            let rel = relative_pose(&o, &g);
            assert!((rel.z - 0.25).abs() < 1e-12);
            assert!(rel.y.abs() < 1e-9 && rel.x > 0.0);
        }
    }

    #[test]
    fn vertical_circles_geometry() {
        let p = VerticalCirclesParams::default();
        let (obs, tgt) = gen_vertical_circles(p, 20.0);
        for i in 0..50 {
            let g = tgt.pose(i as f64 * 0.4);
            assert_eq!(g.x, p.distance);
            assert!(((g.y - p.center[0]).hypot(g.z - p.center[1]) - p.radius).abs() < 1e-12);
            assert_eq!(obs.pose(i as f64).position(), [0.0; 3]);
        }
    }

    #[test]
    fn waypoints_interpolate() {
        let tr = Trajectory {
            kind: TrajectoryKind::Waypoints(alloc::vec![
                Waypoint {
                    t: 0.0,
                    pose: WorldPose::new(0.0, 0.0, 0.0, 0.0)
                },
                Waypoint {
                    t: 2.0,
                    pose: WorldPose::new(2.0, 0.0, 0.0, 0.0)
                },
            ]),
            duration: 3.0,
        };
        assert_eq!(tr.pose(1.0).x, 1.0);
        assert_eq!(tr.pose(3.0).x, 2.0);
    }
}
