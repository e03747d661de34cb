//! L1 tiling over a three-level memory hierarchy and the double-buffered
//! acquisition/inference throughput model.

mod throughput;
mod tiling;
mod validate;

use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::arch::ArchError;

pub use throughput::{
    estimate_throughput, fit_layer_overhead, operative_point, operative_points, Bottleneck,
    CycleModel, OperativePoint, OperativePointName, PipelineTiming, ACQUISITION_CYCLES,
    FIG4_CL_MHZ, FIG4_FC_MHZ, TABLE1_LAYER_OVERHEAD_CYCLES,
};
pub use tiling::{
    plan_tiling, LayerPlan, MemLevel, Residency, Tile, TileShape, TilingPlan, Transfers,
};
pub use validate::{validate_plan, Check, Invariant, ValidationReport};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error(
        "layer `{layer}` is unplannable: minimal double-buffered working set is {minimal_bytes} B"
    )]
    Unplannable { layer: String, minimal_bytes: u64 },
    #[error("memory sizes must be positive and strictly increasing (L1 < L2 < DRAM)")]
    BadMemory,
    #[error(transparent)]
    Arch(#[from] ArchError),
}

/// Sizes of the three memory levels and the DMA bandwidth between them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemoryConfig {
    pub l1_bytes: u64,
    pub l2_bytes: u64,
    pub dram_bytes: u64,
    pub dma_bytes_per_cycle: f64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            l1_bytes: 65_536,
            l2_bytes: 524_288,
            dram_bytes: 8_388_608,
            dma_bytes_per_cycle: 8.0,
        }
    }
}

impl MemoryConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        let ok = self.l1_bytes > 0
            && self.l1_bytes < self.l2_bytes
            && self.l2_bytes < self.dram_bytes
            && self.dma_bytes_per_cycle > 0.0
            && self.dma_bytes_per_cycle.is_finite();
        if ok {
            Ok(())
        } else {
            Err(PlanError::BadMemory)
        }
    }
}
