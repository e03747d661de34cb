use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::controller::{velocity_controller, ControllerConfig};
use super::kalman::{KalmanConfig, KalmanState};
use super::perception::{Perceiver, PerceptionModel};
use super::trajectory::{FlightVolume, Trajectory};
use super::SimError;
use crate::geometry::{relative_pose, world_to_body, Pose, WorldPose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub controller: ControllerConfig,
    pub kalman: KalmanConfig,
    pub volume: FlightVolume,
    pub observer_start: WorldPose,
    /// Leading seconds excluded from the tracking statistics.
    pub transient: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            controller: ControllerConfig::default(),
            kalman: KalmanConfig::default(),
            volume: FlightVolume::default(),
            observer_start: WorldPose::default(),
            transient: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DroneState {
    pub position: [f64; 3],
    pub yaw: f64,
    pub velocity: [f64; 3],
    pub command: [f64; 3],
}

impl DroneState {
    pub fn pose(&self) -> WorldPose {
        WorldPose::new(
            self.position[0],
            self.position[1],
            self.position[2],
            self.yaw,
        )
    }
}

/// One physics step. `measured` and `filtered` are set on perception ticks
/// only; between ticks the controller holds its last command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub tick: bool,
    pub observer: DroneState,
    pub target: WorldPose,
    pub relative: Pose,
    pub measured: Option<Pose>,
    pub filtered: Option<Pose>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub t: f64,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub dt: f64,
    pub setpoint: [f64; 3],
    pub transient: f64,
    pub rows: Vec<LogRow>,
    /// Set when the observer left the flight volume; the rows end there.
    pub abort: Option<Abort>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub duration: f64,
    pub steps: usize,
    pub perception_events: usize,
    pub detections: usize,
    pub detection_rate: f64,
    /// Mean absolute deviation of the true relative position from the
    /// setpoint after the transient, per axis.
    pub tracking_mae: [f64; 3],
    pub tracking_rmse: [f64; 3],
    /// Root-mean-square raw measurement error over all axes and detections.
    pub measurement_rmse: f64,
    pub completed: bool,
}

impl EpisodeLog {
    pub fn completed(&self) -> bool {
        self.abort.is_none()
    }

    pub fn summary(&self) -> EpisodeSummary {
        let ticks = self.rows.iter().filter(|r| r.tick).count();
        let mut detections = 0usize;
        let mut meas_sq = 0.0;
        for r in &self.rows {
            if let Some(m) = r.measured {
                detections += 1;
                let (a, b) = (m.position(), r.relative.position());
                meas_sq += (0..3).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum::<f64>();
            }
        }
        let settled: Vec<&LogRow> = self.rows.iter().filter(|r| r.t >= self.transient).collect();
        let n = settled.len().max(1) as f64;
        let err = |r: &LogRow, i: usize| r.relative.position()[i] - self.setpoint[i];
        let tracking_mae =
            core::array::from_fn(|i| settled.iter().map(|r| err(r, i).abs()).sum::<f64>() / n);
        let tracking_rmse = core::array::from_fn(|i| {
            libm::sqrt(settled.iter().map(|r| err(r, i) * err(r, i)).sum::<f64>() / n)
        });
        EpisodeSummary {
            duration: self.rows.len() as f64 * self.dt,
            steps: self.rows.len(),
            perception_events: ticks,
            detections,
            detection_rate: if ticks > 0 {
                detections as f64 / ticks as f64
            } else {
                0.0
            },
            tracking_mae,
            tracking_rmse,
            measurement_rmse: if detections > 0 {
                libm::sqrt(meas_sq / (3 * detections) as f64)
            } else {
                0.0
            },
            completed: self.completed(),
        }
    }
}

/// Fixed-step closed loop: the target follows `target`, the observer
/// perceives at the configured rate, filters, commands a velocity and
/// relaxes toward it with a first-order lag.
pub fn run_episode(
    target: &Trajectory,
    perception: &PerceptionModel,
    cfg: &SimConfig,
    seed: u64,
) -> Result<EpisodeLog, SimError> {
    let ctl = &cfg.controller;
    ctl.validate()?;
    let per_tick = ctl.steps_per_tick()?;
    let dt = ctl.physics_step;
    if !(target.duration > 0.0 && target.duration.is_finite()) {
        return Err(SimError::BadConfig("episode duration must be positive"));
    }
    target.check_volume(&cfg.volume, dt * per_tick as f64)?;
    if !cfg.volume.contains(cfg.observer_start.position()) {
        return Err(SimError::OutsideVolume {
            what: "observer",
            t: 0.0,
            position: cfg.observer_start.position(),
        });
    }

    let steps = libm::round(target.duration / dt) as usize;
    let tick_dt = dt * per_tick as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perceiver = Perceiver::new(perception, steps.div_ceil(per_tick), tick_dt, &mut rng);
    let mut kf = KalmanState::new(cfg.kalman, perception.measurement_sigma());
    let start = cfg.observer_start;
    let mut obs = DroneState {
        position: start.position(),
        yaw: start.yaw,
        ..DroneState::default()
    };
    let mut ego = [0.0f64; 3];
    let relax = 1.0 - libm::exp(-dt / ctl.response_tau);
    let mut log = EpisodeLog {
        dt,
        setpoint: ctl.setpoint,
        transient: cfg.transient,
        rows: Vec::with_capacity(steps),
        abort: None,
    };

    for i in 0..steps {
        let t = i as f64 * dt;
        let tgt = target.pose(t);
        let tick = i % per_tick == 0;
        let (mut measured, mut filtered) = (None, None);
        if tick {
            measured = perceiver.perceive(&obs.pose(), &tgt);
            filtered = kf.update(measured.as_ref(), tick_dt, world_to_body(ego, obs.yaw))?;
            ego = [0.0; 3];
            obs.command = match filtered {
                Some(f) => velocity_controller(&f, kf.target_velocity(), obs.yaw, ctl),
                None => [0.0; 3],
            };
        }
        log.rows.push(LogRow {
            t,
            tick,
            observer: obs,
            target: tgt,
            relative: relative_pose(&obs.pose(), &tgt),
            measured,
            filtered,
        });
        for (k, e) in ego.iter_mut().enumerate() {
            obs.velocity[k] += (obs.command[k] - obs.velocity[k]) * relax;
            let d = obs.velocity[k] * dt;
            obs.position[k] += d;
            *e += d;
        }
        if !cfg.volume.contains(obs.position) {
            log.abort = Some(Abort {
                t: t + dt,
                position: obs.position,
            });
            break;
        }
    }
    Ok(log)
}
