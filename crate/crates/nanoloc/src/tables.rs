//! CSV tables: per-layer profiles, the architecture overview and the
//! operative-point throughput table.

use nanoloc_core::arch::{profile, NetworkSpec, StaticProfile};
use nanoloc_core::planner::{
    estimate_throughput, operative_points, CycleModel, OperativePoint, FIG4_CL_MHZ, FIG4_FC_MHZ,
};

use crate::error::Result;

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 fields")
}

/// One row per layer plus a totals row.
pub fn layer_profile_csv(p: &StaticProfile) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "kind", "out_shape", "macs", "weight_bytes"])
        .unwrap();
    for l in &p.layers {
        w.write_record([
            l.name.clone(),
            l.kind.to_string(),
            l.out_shape.to_string(),
            l.macs.to_string(),
            l.weight_bytes.to_string(),
        ])
        .unwrap();
    }
    w.write_record([
        "total",
        "",
        "",
        &p.mac_count.to_string(),
        &p.weight_bytes.to_string(),
    ])
    .unwrap();
    finish(w)
}

/// Frame rate of `p` on the given clocks, or at the overview's reference
/// clocks with the MAC-only model.
pub fn estimated_fps(p: &StaticProfile, point: Option<&OperativePoint>) -> f64 {
    match point {
        Some(op) => {
            estimate_throughput(p, op.fc_mhz, op.cl_mhz, &CycleModel::fitted()).frame_rate_fps
        }
        None => {
            estimate_throughput(p, FIG4_FC_MHZ, FIG4_CL_MHZ, &CycleModel::ideal()).frame_rate_fps
        }
    }
}

/// Architecture overview: weight bytes, MACs, estimated fps and an empty
/// R2 column to be filled from trained models.
pub fn overview_csv(nets: &[NetworkSpec], point: Option<&OperativePoint>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "weight_bytes", "macs", "est_fps", "r2"])
        .unwrap();
    for net in nets {
        let p = profile(net)?;
        w.write_record([
            p.network.clone(),
            p.weight_bytes.to_string(),
            p.mac_count.to_string(),
            format!("{:.3}", estimated_fps(&p, point)),
            String::new(),
        ])
        .unwrap();
    }
    Ok(finish(w))
}

/// Modelled versus reference frame rate at each operative point.
pub fn operative_points_csv(p: &StaticProfile) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "operative_point",
        "vdd",
        "fc_mhz",
        "cl_mhz",
        "reference_power_mw",
        "reference_fps",
        "model_fps",
        "error_pct",
        "bottleneck",
    ])
    .unwrap();
    for op in operative_points() {
        let t = estimate_throughput(p, op.fc_mhz, op.cl_mhz, &CycleModel::fitted());
        w.write_record([
            op.name.as_str().to_string(),
            format!("{:.1}", op.vdd),
            format!("{}", op.fc_mhz),
            format!("{}", op.cl_mhz),
            format!("{}", op.reference_power_mw),
            format!("{}", op.reference_fps),
            format!("{:.3}", t.frame_rate_fps),
            format!("{:.2}", 100.0 * (t.frame_rate_fps / op.reference_fps - 1.0)),
            t.bottleneck.as_str().to_string(),
        ])
        .unwrap();
    }
    finish(w)
}
