use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::tiling::TilingPlan;
use super::MemoryConfig;
use crate::arch::{LayerKind, NetworkSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Invariant {
    /// The plan describes exactly the layers of the network.
    Structure,
    /// Double-buffered working set of every step fits L1.
    Footprint,
    /// Output blocks partition the output tensor.
    Coverage,
    /// Every input block contains all rows its outputs read.
    Halo,
}

impl Invariant {
    pub const fn as_str(self) -> &'static str {
        match self {
            Invariant::Structure => "structure",
            Invariant::Footprint => "footprint",
            Invariant::Coverage => "coverage",
            Invariant::Halo => "halo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub layer: String,
    pub invariant: Invariant,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, layer: &str, invariant: Invariant, passed: bool, detail: String) {
        self.checks.push(Check {
            layer: layer.into(),
            invariant,
            passed,
            detail,
        });
    }
}

/// Re-derives every working set, partition and halo from the network
/// description and compares them with the plan.
pub fn validate_plan(plan: &TilingPlan, net: &NetworkSpec, mem: &MemoryConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    let shapes = match net.shapes() {
        Ok(s) => s,
        Err(e) => {
            report.push(&net.name, Invariant::Structure, false, format!("{e}"));
            return report;
        }
    };
    if plan.layers.len() != net.layers.len() {
        report.push(
            &net.name,
            Invariant::Structure,
            false,
            format!(
                "{} planned layers for {} network layers",
                plan.layers.len(),
                net.layers.len()
            ),
        );
        return report;
    }
    for (i, (lp, layer)) in plan.layers.iter().zip(&net.layers).enumerate() {
        let name = layer.name.as_str();
        let fused = matches!(layer.kind, LayerKind::BatchNorm | LayerKind::ReLU);
        if lp.name != layer.name
            || lp.fused != fused
            || (fused && !lp.tiles.is_empty())
            || (!fused && lp.tiles.is_empty())
        {
            report.push(
                name,
                Invariant::Structure,
                false,
                format!("planned `{}` does not describe this layer", lp.name),
            );
            continue;
        }
        if fused {
            continue;
        }
        let (inp, out) = (shapes[i], shapes[i + 1]);
        let fc = layer.kind == LayerKind::FullyConnected;
        let (in_h, in_w, in_c) = if fc {
            (1, 1, inp.elements())
        } else {
            (inp.height, inp.width, inp.channels)
        };
        let (kh, sh, ph) = if fc {
            (1, 1, 0)
        } else {
            (layer.kernel.0, layer.stride.0, layer.padding.0)
        };
        let per_channel_weights = match layer.kind {
            LayerKind::Conv2D => (layer.kernel.0 * layer.kernel.1 * layer.in_channels) as u64 + 4,
            LayerKind::DepthwiseConv2D => (layer.kernel.0 * layer.kernel.1) as u64 + 4,
            LayerKind::FullyConnected => layer.in_channels as u64 + 4,
            _ => 0,
        } + if layer.kind.has_weights()
            && net
                .layers
                .get(i + 1)
                .is_some_and(|l| l.kind == LayerKind::BatchNorm)
        {
            4
        } else {
            0
        };
        let operands = if layer.kind == LayerKind::Add { 2 } else { 1 };

        // coverage: every output (channel, row) cell exactly once, full width
        let mut count = vec![0u32; out.channels * out.height];
        let mut bad_width = false;
        let mut outside = false;
        for t in &lp.tiles {
            if t.channels == 0
                || t.rows == 0
                || t.channel_start + t.channels > out.channels
                || t.row_start + t.rows > out.height
            {
                outside = true;
                continue;
            }
            bad_width |= lp.tile.width != out.width;
            for c in t.channel_start..t.channel_start + t.channels {
                for r in t.row_start..t.row_start + t.rows {
                    count[c * out.height + r] += 1;
                }
            }
        }
        let gaps = count.iter().filter(|&&n| n == 0).count();
        let overlaps = count.iter().filter(|&&n| n > 1).count();
        report.push(
            name,
            Invariant::Coverage,
            gaps == 0 && overlaps == 0 && !bad_width && !outside,
            format!("{gaps} uncovered and {overlaps} multiply covered cells"),
        );

        // halo: buffered input rows contain every row read through the kernel
        let mut halo_ok = true;
        for t in &lp.tiles {
            let first = (t.row_start * sh) as isize - ph as isize;
            let last = ((t.row_start + t.rows - 1) * sh + kh) as isize - 1 - ph as isize;
            let need_lo = first.max(0) as usize;
            let need_hi = (last.min(in_h as isize - 1)).max(-1);
            let have_lo = t.input_row_start;
            let have_hi = t.input_row_start as isize + t.input_rows as isize - 1;
            if need_hi >= need_lo as isize
                && (have_lo > need_lo || have_hi < need_hi || have_hi >= in_h as isize)
            {
                halo_ok = false;
            }
        }
        report.push(
            name,
            Invariant::Halo,
            halo_ok,
            format!("{} tiles", lp.tiles.len()),
        );

        // footprint: recomputed per step from the buffered input rows
        let worst = lp
            .tiles
            .iter()
            .map(|t| {
                let in_ch = if matches!(layer.kind, LayerKind::Conv2D | LayerKind::FullyConnected) {
                    in_c
                } else {
                    t.channels
                };
                let input = (operands * in_ch * t.input_rows * in_w) as u64;
                let output = (t.channels * t.rows * out.width) as u64;
                2 * (input + output + t.channels as u64 * per_channel_weights)
            })
            .max()
            .unwrap_or(0);
        report.push(
            name,
            Invariant::Footprint,
            worst <= mem.l1_bytes && lp.footprint_bytes <= mem.l1_bytes,
            format!("worst step {worst} B of {} B", mem.l1_bytes),
        );
    }
    report
}
