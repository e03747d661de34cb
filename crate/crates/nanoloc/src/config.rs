//! Run configuration: one TOML file, one section per module, unknown keys
//! rejected. Every field has a default so an empty file is valid.

use std::fs;
use std::path::{Path, PathBuf};

use nanoloc_core::geometry::WorldPose;
use nanoloc_core::planner::{MemoryConfig, OperativePointName};
use nanoloc_core::sim::{
    ControllerConfig, FacingCirclesParams, FlightVolume, KalmanConfig, OracleNoise, SimConfig,
    SpiralParams, VerticalCirclesParams,
};
use nanoloc_core::vision::{AugmentationConfig, BlobDetector, CameraIntrinsics, TargetModel};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub memory: MemoryConfig,
    pub throughput: ThroughputSection,
    pub camera: CameraIntrinsics,
    pub target: TargetModel,
    pub augment: AugmentationConfig,
    pub controller: ControllerConfig,
    pub kalman: KalmanConfig,
    pub sim: SimSection,
    pub dataset: DatasetSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            memory: MemoryConfig::default(),
            throughput: ThroughputSection::default(),
            camera: CameraIntrinsics::default(),
            target: TargetModel::default(),
            augment: AugmentationConfig::default(),
            controller: ControllerConfig::default(),
            kalman: KalmanConfig::default(),
            sim: SimSection::default(),
            dataset: DatasetSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThroughputSection {
    /// Clock pair used for frame-rate estimates; the overview's reference
    /// clocks with the MAC-only model when absent.
    pub operative_point: Option<OperativePointName>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryChoice {
    Spiral,
    Static,
    FacingCircles,
    VerticalCircles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PerceptionChoice {
    Oracle,
    Blob,
    Cnn,
}

impl TrajectoryChoice {
    pub const fn as_str(self) -> &'static str {
        match self {
            Self::Spiral => "spiral",
            Self::Static => "static",
            Self::FacingCircles => "facing-circles",
            Self::VerticalCircles => "vertical-circles",
        }
    }
}

impl PerceptionChoice {
    pub const fn as_str(self) -> &'static str {
        match self {
            Self::Oracle => "oracle",
            Self::Blob => "blob",
            Self::Cnn => "cnn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlobSection {
    pub detector: BlobDetector,
    /// Filter measurement standard deviation per axis.
    pub sigma: [f64; 3],
    /// Seed of a textured background; flat when absent.
    pub texture_seed: Option<u64>,
}

impl Default for BlobSection {
    fn default() -> Self {
        Self {
            detector: BlobDetector::rendered(),
            sigma: [0.03, 0.01, 0.01],
            texture_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub trajectory: TrajectoryChoice,
    pub duration: f64,
    pub perception: PerceptionChoice,
    /// Integer weight container for the `cnn` perception.
    pub weights: Option<PathBuf>,
    /// Oracle noise; `noise_rmse` replaces it with the calibrated process.
    pub noise: OracleNoise,
    pub noise_rmse: Option<f64>,
    pub blob: BlobSection,
    pub spiral: SpiralParams,
    pub facing_circles: FacingCirclesParams,
    pub vertical_circles: VerticalCirclesParams,
    pub static_target: WorldPose,
    pub volume: FlightVolume,
    pub observer_start: WorldPose,
    pub transient: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let base = SimConfig::default();
        Self {
            trajectory: TrajectoryChoice::Spiral,
            duration: 60.0,
            perception: PerceptionChoice::Oracle,
            weights: None,
            noise: OracleNoise::default(),
            noise_rmse: None,
            blob: BlobSection::default(),
            spiral: SpiralParams::default(),
            facing_circles: FacingCirclesParams::default(),
            vertical_circles: VerticalCirclesParams::default(),
            static_target: WorldPose::new(1.0, 0.0, 0.0, std::f64::consts::PI),
            volume: base.volume,
            observer_start: base.observer_start,
            transient: base.transient,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub count: usize,
    /// Range of the forward distance to the target, meters.
    pub distance: (f64, f64),
    /// Largest lateral and vertical offset as a fraction of the distance.
    pub lateral_fraction: f64,
    pub vertical_fraction: f64,
    /// Largest relative heading magnitude, radians.
    pub max_heading: f64,
    pub textured: bool,
    pub augment: bool,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            count: 200,
            distance: (0.3, 1.5),
            lateral_fraction: 0.4,
            vertical_fraction: 0.2,
            max_heading: std::f64::consts::PI,
            textured: true,
            augment: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| match e.span() {
            Some(span) => Error::Parse {
                path: path.to_path_buf(),
                line: text[..span.start].matches('\n').count() + 1,
                reason: e.message().to_string(),
            },
            None => Error::Config {
                path: path.to_path_buf(),
                reason: e.message().to_string(),
            },
        })?;
        cfg.validate().map_err(|reason| Error::Config {
            path: path.to_path_buf(),
            reason,
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        self.memory.validate().map_err(|e| e.to_string())?;
        self.camera.validate().map_err(|e| e.to_string())?;
        self.augment.validate().map_err(|e| e.to_string())?;
        self.controller.validate().map_err(|e| e.to_string())?;
        let s = &self.sim;
        if !(s.duration > 0.0 && s.duration.is_finite()) {
            return Err("sim.duration must be positive".into());
        }
        if s.noise_rmse.is_some_and(|r| !(r >= 0.0 && r.is_finite())) {
            return Err("sim.noise_rmse must be non-negative".into());
        }
        let d = &self.dataset;
        if !(d.distance.0 > 0.0 && d.distance.0 <= d.distance.1) {
            return Err("dataset.distance must be an increasing positive range".into());
        }
        Ok(())
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            controller: self.controller,
            kalman: self.kalman,
            volume: self.sim.volume,
            observer_start: self.sim.observer_start,
            transient: self.sim.transient,
        }
    }

    pub fn oracle_noise(&self) -> OracleNoise {
        self.sim
            .noise_rmse
            .map_or(self.sim.noise, OracleNoise::calibrated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(
            RunConfig::parse("", Path::new("c")).unwrap(),
            RunConfig::default()
        );
    }

    #[test]
    fn default_round_trips_through_toml() {
        let text = toml::to_string(&RunConfig::default()).unwrap();
        assert_eq!(
            RunConfig::parse(&text, Path::new("c")).unwrap(),
            RunConfig::default()
        );
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let e =
            RunConfig::parse("seed = 3\n[controller]\nbogus = 1\n", Path::new("c")).unwrap_err();
        match e {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_apply() {
        let c = RunConfig::parse(
            "seed = 7\n[sim]\ntrajectory = \"static\"\nnoise_rmse = 0.18\n[memory]\nl1_bytes = 32000\n",
            Path::new("c"),
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.sim.trajectory, TrajectoryChoice::Static);
        assert_eq!(c.memory.l1_bytes, 32000);
        assert_eq!(c.oracle_noise(), OracleNoise::calibrated(0.18));
    }
}
