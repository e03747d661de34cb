//! One record per line text form of a tiling plan.

use std::fmt::Write;

use nanoloc_core::arch::Shape;
use nanoloc_core::planner::{TileShape, TilingPlan};

fn sh(s: Shape) -> String {
    format!("{}x{}x{}", s.channels, s.height, s.width)
}

fn ts(t: TileShape) -> String {
    format!("{}x{}x{}", t.channels, t.rows, t.width)
}

pub fn to_text(plan: &TilingPlan) -> String {
    let m = &plan.memory;
    let mut s = String::new();
    writeln!(
        s,
        "plan {} l1={} l2={} dram={} dma_bytes_per_cycle={} total_weight_bytes={} tiles={}",
        plan.network,
        m.l1_bytes,
        m.l2_bytes,
        m.dram_bytes,
        m.dma_bytes_per_cycle,
        plan.total_weight_bytes,
        plan.tile_count()
    )
    .unwrap();
    for l in &plan.layers {
        if l.fused {
            writeln!(s, "layer {} {} fused", l.name, l.kind).unwrap();
            continue;
        }
        let t = &l.transfers;
        writeln!(
            s,
            "layer {} {} in={} out={} tile={} input_tile={} inputs={} weight_slice={} footprint={} \
             weights={} input={} output={} tiles={} dma_in={} dma_out={} dma_weights={} dma_cycles={}",
            l.name,
            l.kind,
            sh(l.input_shape),
            sh(l.output_shape),
            ts(l.tile),
            ts(l.input_tile),
            l.input_count,
            l.weight_slice_bytes,
            l.footprint_bytes,
            l.residency.weights.as_str(),
            l.residency.input.as_str(),
            l.residency.output.as_str(),
            l.tiles.len(),
            t.input_bytes,
            t.output_bytes,
            t.weight_bytes,
            t.dma_cycles
        )
        .unwrap();
    }
    s
}
