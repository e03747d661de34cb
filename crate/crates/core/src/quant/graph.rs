//! Groups spec layers into deployable kernels (batch-norm and ReLU folded
//! into their producer) and provides the loop nests shared by all regimes.

use alloc::vec::Vec;

use super::QuantError;
use crate::arch::{LayerKind, LayerSpec, NetworkSpec, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub depthwise: bool,
    pub input: Shape,
    pub output: Shape,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl ConvGeom {
    pub fn from_layer(layer: &LayerSpec, input: Shape, output: Shape) -> Self {
        Self {
            depthwise: matches!(
                layer.kind,
                LayerKind::DepthwiseConv2D | LayerKind::MaxPool2D | LayerKind::AvgPool2D
            ),
            input,
            output,
            kernel: layer.kernel,
            stride: layer.stride,
            padding: layer.padding,
        }
    }

    /// Weights per output channel.
    pub fn fan_in(&self) -> usize {
        let per_group = if self.depthwise {
            1
        } else {
            self.input.channels
        };
        per_group * self.kernel.0 * self.kernel.1
    }

    /// Visits the in-bounds taps of output element `(oc, oy, ox)` in
    /// `(input channel, ky, kx)` order, passing `(input index, weight index)`.
    #[inline]
    pub fn for_each_tap(&self, oc: usize, oy: usize, ox: usize, mut f: impl FnMut(usize, usize)) {
        let (kh, kw) = self.kernel;
        let (ih, iw) = (self.input.height as isize, self.input.width as isize);
        let y0 = (oy * self.stride.0) as isize - self.padding.0 as isize;
        let x0 = (ox * self.stride.1) as isize - self.padding.1 as isize;
        let channels = if self.depthwise {
            oc..oc + 1
        } else {
            0..self.input.channels
        };
        for (g, ic) in channels.enumerate() {
            let wbase = if self.depthwise {
                oc * kh * kw
            } else {
                (oc * self.input.channels + g) * kh * kw
            };
            for ky in 0..kh {
                let iy = y0 + ky as isize;
                if iy < 0 || iy >= ih {
                    continue;
                }
                for kx in 0..kw {
                    let ix = x0 + kx as isize;
                    if ix < 0 || ix >= iw {
                        continue;
                    }
                    let in_idx =
                        (ic * self.input.height + iy as usize) * self.input.width + ix as usize;
                    f(in_idx, wbase + ky * kw + kx);
                }
            }
        }
    }

    /// Iterates all output elements as `(flat index, oc, oy, ox)`.
    pub fn outputs(&self) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
        let (h, w) = (self.output.height, self.output.width);
        (0..self.output.elements()).map(move |i| (i, i / (h * w), (i / w) % h, i % w))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum OpKind {
    Conv(ConvGeom),
    Dense {
        inputs: usize,
        outputs: usize,
    },
    MaxPool(ConvGeom),
    AvgPool(ConvGeom),
    /// Skip operand as a boundary index (0 = network input, j + 1 = output of op j).
    Add {
        skip: usize,
    },
}

/// One deployable kernel: a main layer plus optionally folded batch-norm and ReLU.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct FusedOp {
    pub kind: OpKind,
    pub main: usize,
    pub bn: Option<usize>,
    pub relu: bool,
    pub last: usize,
    pub input: Shape,
    pub output: Shape,
}

impl FusedOp {
    pub fn has_weights(&self) -> bool {
        matches!(self.kind, OpKind::Conv(_) | OpKind::Dense { .. })
    }

    pub fn out_channels(&self) -> usize {
        self.output.channels
    }
}

pub(crate) fn fuse(spec: &NetworkSpec) -> Result<Vec<FusedOp>, QuantError> {
    let shapes = spec.shapes()?;
    let mut ops: Vec<FusedOp> = Vec::new();
    // spec tensor index -> boundary index
    let mut boundary_of = alloc::vec![None; spec.layers.len() + 1];
    boundary_of[0] = Some(0);
    let mut i = 0;
    while i < spec.layers.len() {
        let layer = &spec.layers[i];
        let (input, output) = (shapes[i], shapes[i + 1]);
        let kind = match layer.kind {
            LayerKind::Conv2D | LayerKind::DepthwiseConv2D => {
                OpKind::Conv(ConvGeom::from_layer(layer, input, output))
            }
            LayerKind::FullyConnected => OpKind::Dense {
                inputs: layer.in_channels,
                outputs: layer.out_channels,
            },
            LayerKind::MaxPool2D => OpKind::MaxPool(ConvGeom::from_layer(layer, input, output)),
            LayerKind::AvgPool2D => OpKind::AvgPool(ConvGeom::from_layer(layer, input, output)),
            LayerKind::Add => {
                let skip = layer.skip.expect("validated by shape propagation");
                let skip = boundary_of[skip].ok_or_else(|| QuantError::UnsupportedPattern {
                    layer: layer.name.clone(),
                    reason: "residual source is inside a fused group",
                })?;
                OpKind::Add { skip }
            }
            LayerKind::BatchNorm | LayerKind::ReLU => {
                return Err(QuantError::UnsupportedPattern {
                    layer: layer.name.clone(),
                    reason: "batch-norm/ReLU must follow a kernel layer",
                })
            }
        };
        let mut op = FusedOp {
            kind,
            main: i,
            bn: None,
            relu: false,
            last: i,
            input,
            output,
        };
        let takes_bn = matches!(op.kind, OpKind::Conv(_) | OpKind::Dense { .. });
        if takes_bn && spec.layers.get(op.last + 1).map(|l| l.kind) == Some(LayerKind::BatchNorm) {
            op.last += 1;
            op.bn = Some(op.last);
        }
        if spec.layers.get(op.last + 1).map(|l| l.kind) == Some(LayerKind::ReLU) {
            op.last += 1;
            op.relu = true;
        }
        i = op.last + 1;
        ops.push(op);
        boundary_of[i] = Some(ops.len());
    }
    Ok(ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{build_frontnet, build_mobilenet_v2, MobileNetV2Config};

    #[test]
    fn frontnet_fuses_to_nine_kernels() {
        let ops = fuse(&build_frontnet()).unwrap();
        assert_eq!(ops.len(), 9);
        assert!(ops[..8]
            .iter()
            .filter(|o| o.has_weights())
            .all(|o| o.bn.is_some() && o.relu));
        let head = ops.last().unwrap();
        assert!(matches!(
            head.kind,
            OpKind::Dense {
                inputs: 1920,
                outputs: 4
            }
        ));
        assert!(!head.relu && head.bn.is_none());
    }

    #[test]
    fn mobilenet_skips_map_to_boundaries() {
        let net = build_mobilenet_v2(MobileNetV2Config { t: 6, n: 3 }).unwrap();
        let ops = fuse(&net).unwrap();
        for (j, op) in ops.iter().enumerate() {
            if let OpKind::Add { skip } = op.kind {
                assert!(skip < j);
                assert_eq!(ops[skip - 1].output, op.input);
            }
        }
    }

    #[test]
    fn taps_skip_padding() {
        let g = ConvGeom {
            depthwise: false,
            input: Shape::new(1, 3, 3),
            output: Shape::new(1, 3, 3),
            kernel: (3, 3),
            stride: (1, 1),
            padding: (1, 1),
        };
        let mut corner = 0;
        g.for_each_tap(0, 0, 0, |_, _| corner += 1);
        let mut centre = 0;
        g.for_each_tap(0, 1, 1, |_, _| centre += 1);
        assert_eq!((corner, centre), (4, 9));
    }
}
