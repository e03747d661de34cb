use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::{body_to_world, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    /// Desired relative position of the target, body frame.
    pub setpoint: [f64; 3],
    /// Proportional gains per axis, 1/s.
    pub gains: [f64; 3],
    /// Weight of the estimated target velocity added to the command.
    pub feedforward: f64,
    /// Bound on the commanded speed, m/s.
    pub max_speed: f64,
    pub perception_rate_hz: f64,
    pub physics_step: f64,
    /// First-order time constant of the observer's velocity response.
    pub response_tau: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            setpoint: [0.8, 0.0, 0.0],
            gains: [2.0; 3],
            feedforward: 1.0,
            max_speed: 1.0,
            perception_rate_hz: 48.0,
            physics_step: 1.0 / 480.0,
            response_tau: 0.3,
        }
    }
}

impl ControllerConfig {
    /// Physics steps per perception tick.
    pub fn steps_per_tick(&self) -> Result<usize, SimError> {
        let dt = self.physics_step;
        let rate = self.perception_rate_hz;
        if !(dt > 0.0 && dt.is_finite() && rate > 0.0 && rate.is_finite())
            || rate * dt > 1.0 + 1e-12
        {
            return Err(SimError::BadRate { rate, step: dt });
        }
        let ratio = 1.0 / (rate * dt);
        let n = libm::round(ratio);
        if libm::fabs(ratio - n) > 1e-6 * n {
            return Err(SimError::BadRate { rate, step: dt });
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.steps_per_tick()?;
        let ok = self.gains.iter().all(|g| *g >= 0.0 && g.is_finite())
            && self.feedforward >= 0.0
            && self.max_speed > 0.0
            && self.response_tau > 0.0
            && self.setpoint.iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(SimError::BadConfig(
                "controller gains, limits and time constant must be non-negative",
            ))
        }
    }
}

/// Proportional law on `filtered - setpoint` plus velocity feedforward,
/// rotated into the world frame by the observer's fixed yaw and clamped
/// in norm to `max_speed`.
pub fn velocity_controller(
    filtered: &Pose,
    target_velocity: [f64; 3],
    yaw: f64,
    cfg: &ControllerConfig,
) -> [f64; 3] {
    let p = filtered.position();
    let body: [f64; 3] = core::array::from_fn(|i| {
        cfg.gains[i] * (p[i] - cfg.setpoint[i]) + cfg.feedforward * target_velocity[i]
    });
    let mut cmd = body_to_world(body, yaw);
    let norm = libm::sqrt(cmd.iter().map(|v| v * v).sum());
    if norm > cfg.max_speed {
        cmd.iter_mut().for_each(|v| *v *= cfg.max_speed / norm);
    }
    cmd
}
