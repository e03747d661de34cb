use serde::{Deserialize, Serialize};

use crate::arch::StaticProfile;

/// Frame acquisition plus crop on the fabric controller, in FC cycles.
pub const ACQUISITION_CYCLES: f64 = 600_000.0;

/// Cluster and fabric clocks of the architecture comparison.
pub const FIG4_CL_MHZ: f64 = 170.0;
pub const FIG4_FC_MHZ: f64 = 250.0;

/// Per-kernel overhead fitted once on the 48.3 fps max-performance row of
/// Frontnet and then kept fixed.
pub const TABLE1_LAYER_OVERHEAD_CYCLES: f64 = 9_830.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CycleModel {
    pub macs_per_cycle: f64,
    /// Fixed cycles charged per kernel layer (batch-norm and ReLU excluded).
    pub layer_overhead_cycles: f64,
    pub acquisition_cycles: f64,
}

impl Default for CycleModel {
    fn default() -> Self {
        Self::ideal()
    }
}

impl CycleModel {
    /// MACs only, 4 per cycle.
    pub const fn ideal() -> Self {
        Self {
            macs_per_cycle: 4.0,
            layer_overhead_cycles: 0.0,
            acquisition_cycles: ACQUISITION_CYCLES,
        }
    }

    /// The ideal model plus the frozen per-layer overhead.
    pub const fn fitted() -> Self {
        Self {
            layer_overhead_cycles: TABLE1_LAYER_OVERHEAD_CYCLES,
            ..Self::ideal()
        }
    }

    pub fn inference_cycles(&self, profile: &StaticProfile) -> f64 {
        profile.mac_count as f64 / self.macs_per_cycle
            + self.layer_overhead_cycles * profile.kernel_layers() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperativePointName {
    MinPower,
    MostEfficient,
    MaxPerformance,
}

impl OperativePointName {
    pub const fn as_str(self) -> &'static str {
        match self {
            OperativePointName::MinPower => "min_power",
            OperativePointName::MostEfficient => "most_efficient",
            OperativePointName::MaxPerformance => "max_performance",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        operative_points()
            .into_iter()
            .map(|p| p.name)
            .find(|n| n.as_str() == s)
    }
}

/// Voltage and clock configuration with its measured power and frame rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperativePoint {
    pub name: OperativePointName,
    pub vdd: f64,
    pub fc_mhz: f64,
    pub cl_mhz: f64,
    pub reference_power_mw: f64,
    pub reference_fps: f64,
}

pub const fn operative_points() -> [OperativePoint; 3] {
    [
        OperativePoint {
            name: OperativePointName::MinPower,
            vdd: 1.0,
            fc_mhz: 25.0,
            cl_mhz: 25.0,
            reference_power_mw: 9.9,
            reference_fps: 6.8,
        },
        OperativePoint {
            name: OperativePointName::MostEfficient,
            vdd: 1.0,
            fc_mhz: 25.0,
            cl_mhz: 75.0,
            reference_power_mw: 25.1,
            reference_fps: 19.7,
        },
        OperativePoint {
            name: OperativePointName::MaxPerformance,
            vdd: 1.2,
            fc_mhz: 250.0,
            cl_mhz: 175.0,
            reference_power_mw: 95.4,
            reference_fps: 48.3,
        },
    ]
}

pub fn operative_point(name: OperativePointName) -> OperativePoint {
    operative_points()
        .into_iter()
        .find(|p| p.name == name)
        .expect("every name has a row")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bottleneck {
    Inference,
    Acquisition,
}

impl Bottleneck {
    pub const fn as_str(self) -> &'static str {
        match self {
            Bottleneck::Inference => "inference",
            Bottleneck::Acquisition => "acquisition",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineTiming {
    pub inference_cycles: f64,
    pub acquisition_crop_cycles: f64,
    pub frame_rate_fps: f64,
    pub bottleneck: Bottleneck,
}

/// With acquisition of frame `k + 1` overlapped with inference on frame `k`,
/// the period is the slower of the two stages.
pub fn estimate_throughput(
    profile: &StaticProfile,
    fc_mhz: f64,
    cl_mhz: f64,
    model: &CycleModel,
) -> PipelineTiming {
    let inference_cycles = model.inference_cycles(profile);
    let t_inf = inference_cycles / (cl_mhz * 1e6);
    let t_acq = model.acquisition_cycles / (fc_mhz * 1e6);
    let (period, bottleneck) = if t_inf >= t_acq {
        (t_inf, Bottleneck::Inference)
    } else {
        (t_acq, Bottleneck::Acquisition)
    };
    PipelineTiming {
        inference_cycles,
        acquisition_crop_cycles: model.acquisition_cycles,
        frame_rate_fps: 1.0 / period,
        bottleneck,
    }
}

/// Per-layer overhead that makes `profile` run at `target_fps` on the cluster
/// clock `cl_mhz` (inference-bound).
pub fn fit_layer_overhead(
    profile: &StaticProfile,
    cl_mhz: f64,
    target_fps: f64,
    macs_per_cycle: f64,
) -> f64 {
    let budget = cl_mhz * 1e6 / target_fps;
    (budget - profile.mac_count as f64 / macs_per_cycle) / profile.kernel_layers() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{build_frontnet, profile};

    #[test]
    fn frontnet_ideal_rate() {
        let p = profile(&build_frontnet()).unwrap();
        let t = estimate_throughput(&p, FIG4_FC_MHZ, FIG4_CL_MHZ, &CycleModel::ideal());
        assert_eq!(t.bottleneck, Bottleneck::Inference);
        assert!((t.frame_rate_fps - 170e6 * 4.0 / p.mac_count as f64).abs() < 1e-9);
        assert!((t.frame_rate_fps - 48.0).abs() / 48.0 < 0.10);
    }

    #[test]
    fn frozen_overhead_matches_fit() {
        let p = profile(&build_frontnet()).unwrap();
        let fit = fit_layer_overhead(&p, 175.0, 48.3, 4.0);
        assert!((fit - TABLE1_LAYER_OVERHEAD_CYCLES).abs() < 1.0, "{fit}");
    }

    #[test]
    fn rate_never_exceeds_either_stage() {
        let p = profile(&build_frontnet()).unwrap();
        for op in operative_points() {
            let m = CycleModel::fitted();
            let t = estimate_throughput(&p, op.fc_mhz, op.cl_mhz, &m);
            let inf_only = op.cl_mhz * 1e6 / t.inference_cycles;
            let acq_only = op.fc_mhz * 1e6 / m.acquisition_cycles;
            assert!(t.frame_rate_fps <= inf_only + 1e-9 && t.frame_rate_fps <= acq_only + 1e-9);
        }
    }

    #[test]
    fn names_round_trip() {
        for p in operative_points() {
            assert_eq!(OperativePointName::parse(p.name.as_str()), Some(p.name));
        }
    }
}
