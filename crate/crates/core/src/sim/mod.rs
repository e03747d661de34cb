//! Closed-loop follow-the-target simulation: trajectories, perception
//! models, per-axis Kalman filtering, velocity control and episode logs.

mod controller;
mod episode;
mod kalman;
mod perception;
mod trajectory;

pub use controller::{velocity_controller, ControllerConfig};
pub use episode::{run_episode, Abort, DroneState, EpisodeLog, EpisodeSummary, LogRow, SimConfig};
pub use kalman::{kalman_update, AxisFilter, KalmanConfig, KalmanState, MIN_MEASUREMENT_VAR};
pub use perception::{
    estimate_pose_from_blob, BlobPinhole, OracleNoise, Perceiver, PerceptionModel,
};
pub use trajectory::{
    gen_facing_circles, gen_spiral, gen_vertical_circles, stationary, FacingCirclesParams,
    FlightVolume, SpiralParams, Trajectory, TrajectoryKind, VerticalCirclesParams, Waypoint,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("{what} at {position:?} leaves the flight volume at t = {t:.3} s")]
    OutsideVolume {
        what: &'static str,
        t: f64,
        position: [f64; 3],
    },
    #[error(
        "perception rate {rate} Hz is not an integer divisor of the physics rate (step {step} s)"
    )]
    BadRate { rate: f64, step: f64 },
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("Kalman covariance lost positive definiteness")]
    CovarianceNotPositiveDefinite,
    #[error("{0}")]
    BadConfig(&'static str),
}
