use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::Pose;

/// Constant-velocity filter on one axis. The state is the relative position
/// of the target and the target's own velocity; the observer's displacement
/// enters as a known input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisFilter {
    pub position: f64,
    pub velocity: f64,
    pub cov: [[f64; 2]; 2],
}

impl AxisFilter {
    pub fn new(position: f64, position_var: f64, velocity_var: f64) -> Self {
        Self {
            position,
            velocity: 0.0,
            cov: [[position_var, 0.0], [0.0, velocity_var]],
        }
    }

    /// Propagates by `h` seconds with white-acceleration density `q`. `damping`
    /// scales the velocity mean only.
    pub fn predict(&mut self, h: f64, q: f64, ego: f64, damping: f64) {
        self.position += h * self.velocity - ego;
        self.velocity *= damping;
        let p = self.cov;
        let p00 = p[0][0] + h * (p[1][0] + p[0][1]) + h * h * p[1][1];
        let p01 = p[0][1] + h * p[1][1];
        let p11 = p[1][1];
        let (h2, h3) = (h * h, h * h * h);
        self.cov = [
            [p00 + q * h3 / 3.0, p01 + q * h2 / 2.0],
            [p01 + q * h2 / 2.0, p11 + q * h],
        ];
    }

    /// Position-measurement update in Joseph form.
    pub fn update(&mut self, z: f64, r: f64) -> Result<(), SimError> {
        let p = self.cov;
        let s = p[0][0] + r;
        let k = [p[0][0] / s, p[1][0] / s];
        let innov = z - self.position;
        self.position += k[0] * innov;
        self.velocity += k[1] * innov;
        // (I - K H) with H = [1 0]
        let a = [[1.0 - k[0], 0.0], [-k[1], 1.0]];
        let mut ap = [[0.0; 2]; 2];
        for (i, row) in ap.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * p[0][j] + a[i][1] * p[1][j];
            }
        }
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = ap[i][0] * a[j][0] + ap[i][1] * a[j][1] + k[i] * r * k[j];
            }
        }
        // symmetrize away rounding
        let off = (out[0][1] + out[1][0]) / 2.0;
        out[0][1] = off;
        out[1][0] = off;
        self.cov = out;
        self.check()
    }

    pub fn check(&self) -> Result<(), SimError> {
        let p = self.cov;
        let det = p[0][0] * p[1][1] - p[0][1] * p[1][0];
        let finite = p.iter().flatten().all(|v| v.is_finite())
            && self.position.is_finite()
            && self.velocity.is_finite();
        if finite && p[0][0] > 0.0 && det > 0.0 {
            Ok(())
        } else {
            Err(SimError::CovarianceNotPositiveDefinite)
        }
    }

    pub fn trace(&self) -> f64 {
        self.cov[0][0] + self.cov[1][1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KalmanConfig {
    /// White-acceleration spectral density, (m/s^2)^2 per Hz.
    pub process_noise: f64,
    /// Velocity variance at initialization.
    pub initial_velocity_var: f64,
    /// Time constant of the velocity-mean decay while no measurement arrives.
    pub coast_tau: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            process_noise: 0.5,
            initial_velocity_var: 1.0,
            coast_tau: 1.0,
        }
    }
}

/// Three independent axis filters plus the last measured relative yaw, which
/// is carried along unfiltered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KalmanState {
    pub config: KalmanConfig,
    /// Measurement variance per axis.
    pub measurement_var: [f64; 3],
    axes: Option<[AxisFilter; 3]>,
    phi: f64,
}

/// Floor on the measurement variance so a noise-free sensor still yields a
/// well-conditioned update.
pub const MIN_MEASUREMENT_VAR: f64 = 1e-6;

impl KalmanState {
    pub fn new(config: KalmanConfig, sigma: [f64; 3]) -> Self {
        Self {
            config,
            measurement_var: sigma.map(|s| (s * s).max(MIN_MEASUREMENT_VAR)),
            axes: None,
            phi: 0.0,
        }
    }

    pub fn axes(&self) -> Option<&[AxisFilter; 3]> {
        self.axes.as_ref()
    }

    /// Estimated target velocity in the observer body frame.
    pub fn target_velocity(&self) -> [f64; 3] {
        self.axes.map_or([0.0; 3], |a| a.map(|f| f.velocity))
    }

    pub fn estimate(&self) -> Option<Pose> {
        self.axes
            .map(|a| Pose::new(a[0].position, a[1].position, a[2].position, self.phi))
    }

    /// Predicts over `dt` accounting for the observer displacement `ego`
    /// (body frame), then corrects with `measurement` if present. Returns
    /// the filtered pose once the filter has been initialized.
    pub fn update(
        &mut self,
        measurement: Option<&Pose>,
        dt: f64,
        ego: [f64; 3],
    ) -> Result<Option<Pose>, SimError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SimError::BadStep(dt));
        }
        let cfg = self.config;
        match (&mut self.axes, measurement) {
            (None, None) => {}
            (None, Some(m)) => {
                let z = m.position();
                let v = self.measurement_var;
                self.axes = Some(core::array::from_fn(|i| {
                    AxisFilter::new(z[i], v[i], cfg.initial_velocity_var)
                }));
                self.phi = m.phi;
            }
            (Some(axes), m) => {
                let damping = if m.is_some() {
                    1.0
                } else {
                    libm::exp(-dt / cfg.coast_tau)
                };
                for (i, f) in axes.iter_mut().enumerate() {
                    f.predict(dt, cfg.process_noise, ego[i], damping);
                    match m {
                        Some(m) => f.update(m.position()[i], self.measurement_var[i])?,
                        None => f.check()?,
                    }
                }
                if let Some(m) = m {
                    self.phi = m.phi;
                }
            }
        }
        Ok(self.estimate())
    }
}

/// Free-function form of [`KalmanState::update`].
pub fn kalman_update(
    state: &mut KalmanState,
    measurement: Option<&Pose>,
    dt: f64,
    ego: [f64; 3],
) -> Result<Option<Pose>, SimError> {
    state.update(measurement, dt, ego)
}
