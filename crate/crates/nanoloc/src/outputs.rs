//! Episode logs, summaries and evaluation outputs.

use nanoloc_core::geometry::Pose;
use nanoloc_core::metrics::{EvalReport, ScatterPoint};
use nanoloc_core::sim::{Abort, EpisodeLog, EpisodeSummary};
use serde::Serialize;

pub const EPISODE_HEADER: [&str; 32] = [
    "t", "tick", "obs_x", "obs_y", "obs_z", "obs_yaw", "obs_vx", "obs_vy", "obs_vz", "cmd_vx",
    "cmd_vy", "cmd_vz", "tgt_x", "tgt_y", "tgt_z", "tgt_yaw", "rel_x", "rel_y", "rel_z", "rel_phi",
    "meas_x", "meas_y", "meas_z", "meas_phi", "filt_x", "filt_y", "filt_z", "filt_phi", "err_x",
    "err_y", "err_z", "detected",
];

fn pose_fields(p: Option<Pose>) -> [String; 4] {
    match p {
        Some(p) => p.to_array().map(|v| v.to_string()),
        None => Default::default(),
    }
}

/// One row per physics step; measurement and filter columns are empty off
/// perception ticks.
pub fn episode_csv(log: &EpisodeLog) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EPISODE_HEADER).unwrap();
    for r in &log.rows {
        let o = &r.observer;
        let rel = r.relative.position();
        let mut row: Vec<String> = vec![r.t.to_string(), u8::from(r.tick).to_string()];
        row.extend(
            o.position
                .iter()
                .chain([&o.yaw])
                .chain(&o.velocity)
                .chain(&o.command)
                .map(f64::to_string),
        );
        row.extend([r.target.x, r.target.y, r.target.z, r.target.yaw].map(|v| v.to_string()));
        row.extend(r.relative.to_array().map(|v| v.to_string()));
        row.extend(pose_fields(r.measured));
        row.extend(pose_fields(r.filtered));
        row.extend((0..3).map(|i| (rel[i] - log.setpoint[i]).to_string()));
        row.push(u8::from(r.measured.is_some()).to_string());
        w.write_record(&row).unwrap();
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary<'a> {
    pub seed: u64,
    pub trajectory: &'a str,
    pub perception: &'a str,
    #[serde(flatten)]
    pub summary: EpisodeSummary,
    pub abort: Option<Abort>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationOutput<'a> {
    pub seed: u64,
    pub predictor: &'a str,
    #[serde(flatten)]
    pub report: &'a EvalReport,
}

pub fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

pub fn scatter_csv(points: &[ScatterPoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["variable", "truth", "prediction", "near"])
        .unwrap();
    for p in points {
        w.write_record([
            p.variable.as_str().to_string(),
            p.truth.to_string(),
            p.prediction.to_string(),
            p.near.to_string(),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
}
