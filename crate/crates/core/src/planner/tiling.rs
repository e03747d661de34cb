use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{MemoryConfig, PlanError};
use crate::arch::{LayerKind, LayerSpec, NetworkSpec, Shape, CHANNEL_CONSTANT_BYTES};

/// Channels x rows x columns of 8-bit elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TileShape {
    pub channels: usize,
    pub rows: usize,
    pub width: usize,
}

impl TileShape {
    pub const fn bytes(&self) -> u64 {
        (self.channels * self.rows * self.width) as u64
    }
}

/// One step of a layer: an output block and the input rows it reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    pub channel_start: usize,
    pub channels: usize,
    pub row_start: usize,
    pub rows: usize,
    pub input_row_start: usize,
    pub input_rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MemLevel {
    L1,
    L2,
    Dram,
}

impl MemLevel {
    pub const fn as_str(self) -> &'static str {
        match self {
            MemLevel::L1 => "L1",
            MemLevel::L2 => "L2",
            MemLevel::Dram => "DRAM",
        }
    }
}

/// Where a layer's weights and activation tensors live between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Residency {
    pub weights: MemLevel,
    pub input: MemLevel,
    pub output: MemLevel,
}

/// DMA traffic between L1 and the outer levels for one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Transfers {
    pub input_bytes: u64,
    pub output_bytes: u64,
    pub weight_bytes: u64,
    pub dma_cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub name: String,
    pub kind: LayerKind,
    /// Folded into the producing kernel; has no tiles.
    pub fused: bool,
    pub input_shape: Shape,
    pub output_shape: Shape,
    /// Largest output block.
    pub tile: TileShape,
    /// Largest input block including the halo.
    pub input_tile: TileShape,
    /// Number of input tensors read per step (two for residual additions).
    pub input_count: usize,
    pub weight_slice_bytes: u64,
    /// Double-buffered working set of the largest step.
    pub footprint_bytes: u64,
    pub residency: Residency,
    /// Channel blocks outer, row blocks inner.
    pub tiles: Vec<Tile>,
    pub transfers: Transfers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilingPlan {
    pub network: String,
    pub memory: MemoryConfig,
    pub total_weight_bytes: u64,
    pub layers: Vec<LayerPlan>,
}

impl TilingPlan {
    pub fn tile_count(&self) -> usize {
        self.layers.iter().map(|l| l.tiles.len()).sum()
    }
}

/// Tiling-relevant geometry of one kernel layer.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerGeom {
    pub input: Shape,
    pub output: Shape,
    pub kernel_rows: usize,
    pub stride_rows: usize,
    pub pad_rows: usize,
    /// Every output channel reads every input channel.
    pub dense_channels: bool,
    pub input_count: usize,
    pub weight_bytes_per_channel: u64,
}

impl LayerGeom {
    pub fn new(spec: &NetworkSpec, idx: usize, input: Shape, output: Shape) -> Self {
        let layer: &LayerSpec = &spec.layers[idx];
        let folded_bn = spec
            .layers
            .get(idx + 1)
            .is_some_and(|l| l.kind == LayerKind::BatchNorm);
        let weight_bytes_per_channel = if layer.kind.has_weights() {
            layer.weight_count() / layer.out_channels as u64
                + CHANNEL_CONSTANT_BYTES
                + if folded_bn { CHANNEL_CONSTANT_BYTES } else { 0 }
        } else {
            0
        };
        // dense layers see their input as one flat vector
        let input = if layer.kind == LayerKind::FullyConnected {
            Shape::vector(input.elements())
        } else {
            input
        };
        let flat = layer.kind == LayerKind::FullyConnected;
        Self {
            input,
            output,
            kernel_rows: if flat { 1 } else { layer.kernel.0 },
            stride_rows: if flat { 1 } else { layer.stride.0 },
            pad_rows: if flat { 0 } else { layer.padding.0 },
            dense_channels: matches!(layer.kind, LayerKind::Conv2D | LayerKind::FullyConnected),
            input_count: if layer.kind == LayerKind::Add { 2 } else { 1 },
            weight_bytes_per_channel,
        }
    }

    pub fn input_channels(&self, out_channels: usize) -> usize {
        if self.dense_channels {
            self.input.channels
        } else {
            out_channels
        }
    }

    /// Input rows `[start, start + count)` read by output rows starting at `row_start`.
    pub fn input_rows(&self, row_start: usize, rows: usize) -> (usize, usize) {
        let lo = (row_start * self.stride_rows) as isize - self.pad_rows as isize;
        let hi = ((row_start + rows - 1) * self.stride_rows + self.kernel_rows) as isize
            - self.pad_rows as isize;
        let lo = lo.max(0) as usize;
        let hi = (hi.max(0) as usize).min(self.input.height);
        (lo, hi.saturating_sub(lo))
    }

    /// Upper bound on input rows for any block of `rows` output rows.
    fn input_rows_bound(&self, rows: usize) -> usize {
        ((rows - 1) * self.stride_rows + self.kernel_rows).min(self.input.height)
    }

    pub fn footprint(&self, channels: usize, rows: usize, input_rows: usize) -> u64 {
        let input =
            (self.input_count * self.input_channels(channels) * input_rows * self.input.width)
                as u64;
        let output = (channels * rows * self.output.width) as u64;
        2 * (input + output + channels as u64 * self.weight_bytes_per_channel)
    }
}

/// Chooses for every kernel layer the largest output block (channels x rows,
/// full width) whose double-buffered working set fits L1. Ties go to the
/// block with more channels.
pub fn plan_tiling(net: &NetworkSpec, mem: &MemoryConfig) -> Result<TilingPlan, PlanError> {
    mem.validate()?;
    let shapes = net.shapes()?;
    let geoms: Vec<Option<LayerGeom>> = net
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            (!l.kind.is_fused()).then(|| LayerGeom::new(net, i, shapes[i], shapes[i + 1]))
        })
        .collect();
    let total_weight_bytes: u64 = geoms
        .iter()
        .flatten()
        .map(|g| g.weight_bytes_per_channel * g.output.channels as u64)
        .sum();
    let weights_level = if total_weight_bytes <= mem.l2_bytes {
        MemLevel::L2
    } else {
        MemLevel::Dram
    };
    let resident = if weights_level == MemLevel::L2 {
        total_weight_bytes
    } else {
        0
    };

    let mut layers = Vec::with_capacity(net.layers.len());
    for (i, layer) in net.layers.iter().enumerate() {
        let (input_shape, output_shape) = (shapes[i], shapes[i + 1]);
        let mut act_bytes = (input_shape.elements() + output_shape.elements()) as u64;
        if let Some(s) = layer.skip {
            act_bytes += shapes[s].elements() as u64;
        }
        let act_level = if act_bytes + resident <= mem.l2_bytes {
            MemLevel::L2
        } else {
            MemLevel::Dram
        };
        let residency = Residency {
            weights: weights_level,
            input: act_level,
            output: act_level,
        };
        let Some(g) = geoms[i] else {
            layers.push(LayerPlan {
                name: layer.name.clone(),
                kind: layer.kind,
                fused: true,
                input_shape,
                output_shape,
                tile: TileShape::default(),
                input_tile: TileShape::default(),
                input_count: 1,
                weight_slice_bytes: 0,
                footprint_bytes: 0,
                residency,
                tiles: Vec::new(),
                transfers: Transfers::default(),
            });
            continue;
        };
        let minimal = g.footprint(1, 1, g.input_rows_bound(1));
        if minimal > mem.l1_bytes {
            return Err(PlanError::Unplannable {
                layer: layer.name.clone(),
                minimal_bytes: minimal,
            });
        }
        let (h, c) = (g.output.height, g.output.channels);
        let mut best = (0usize, 0usize);
        for oc in (1..=c).rev() {
            if oc * h <= best.0 * best.1 {
                break;
            }
            if let Some(rows) = (1..=h)
                .rev()
                .find(|&r| g.footprint(oc, r, g.input_rows_bound(r)) <= mem.l1_bytes)
            {
                if oc * rows > best.0 * best.1 {
                    best = (oc, rows);
                }
            }
        }
        let (oc, rows) = best;
        let mut tiles = Vec::new();
        for cs in (0..c).step_by(oc) {
            for rs in (0..h).step_by(rows) {
                let (channels, rws) = (oc.min(c - cs), rows.min(h - rs));
                let (irs, irn) = g.input_rows(rs, rws);
                tiles.push(Tile {
                    channel_start: cs,
                    channels,
                    row_start: rs,
                    rows: rws,
                    input_row_start: irs,
                    input_rows: irn,
                });
            }
        }
        let max_in_rows = tiles.iter().map(|t| t.input_rows).max().unwrap_or(0);
        let input_bytes = tiles
            .iter()
            .map(|t| {
                (g.input_count * g.input_channels(t.channels) * t.input_rows * g.input.width) as u64
            })
            .sum();
        let weight_bytes = g.weight_bytes_per_channel * c as u64;
        let output_bytes = output_shape.elements() as u64;
        let dma_cycles = libm::ceil(
            (input_bytes + output_bytes + weight_bytes) as f64 / mem.dma_bytes_per_cycle,
        ) as u64;
        layers.push(LayerPlan {
            name: layer.name.clone(),
            kind: layer.kind,
            fused: false,
            input_shape,
            output_shape,
            tile: TileShape {
                channels: oc,
                rows,
                width: g.output.width,
            },
            input_tile: TileShape {
                channels: g.input_channels(oc),
                rows: max_in_rows,
                width: g.input.width,
            },
            input_count: g.input_count,
            weight_slice_bytes: oc as u64 * g.weight_bytes_per_channel,
            footprint_bytes: g.footprint(oc, rows, max_in_rows),
            residency,
            tiles,
            transfers: Transfers {
                input_bytes,
                output_bytes,
                weight_bytes,
                dma_cycles,
            },
        });
    }
    Ok(TilingPlan {
        network: net.name.clone(),
        memory: *mem,
        total_weight_bytes,
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn tiny_layer_single_tile() {
        let net = NetworkSpec::new(
            "t",
            Shape::new(1, 4, 4),
            vec![LayerSpec::conv("c", 1, 1, 0, 1, 1)],
        );
        let mem = MemoryConfig {
            l1_bytes: 1 << 20,
            l2_bytes: 1 << 21,
            ..MemoryConfig::default()
        };
        let plan = plan_tiling(&net, &mem).unwrap();
        let l = &plan.layers[0];
        assert_eq!(l.tiles.len(), 1);
        assert_eq!(
            l.tile,
            TileShape {
                channels: 1,
                rows: 4,
                width: 4
            }
        );
    }

    #[test]
    fn unplannable_reports_minimum() {
        let net = NetworkSpec::new(
            "t",
            Shape::new(64, 8, 8),
            vec![LayerSpec::conv("big", 3, 1, 1, 64, 4)],
        );
        let mem = MemoryConfig {
            l1_bytes: 512,
            ..MemoryConfig::default()
        };
        match plan_tiling(&net, &mem) {
            Err(PlanError::Unplannable {
                layer,
                minimal_bytes,
            }) => {
                assert_eq!(layer, "big");
                // 2 * (64 ch * 3 halo rows * 8 + 1 * 8 + 64 * 9 + 4)
                assert_eq!(minimal_bytes, 2 * (64 * 3 * 8 + 8 + 64 * 9 + 4));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn halo_rows() {
        let net = NetworkSpec::new(
            "t",
            Shape::new(1, 10, 10),
            vec![LayerSpec::conv("c", 5, 2, 2, 1, 1)],
        );
        let shapes = net.shapes().unwrap();
        let g = LayerGeom::new(&net, 0, shapes[0], shapes[1]);
        assert_eq!(g.input_rows(0, 1), (0, 3));
        assert_eq!(g.input_rows(1, 2), (0, 7));
        assert_eq!(g.input_rows(4, 1), (6, 4));
    }
}
