use alloc::string::String;
use alloc::vec::Vec;

use super::fake::{ActivationQuant, FakeQuantNetwork, OutputQuant};
use super::graph::{fuse, FusedOp, OpKind};
use super::requant::{round_half_away, Requant};
use super::{pose_from_outputs, QTensor, QuantError, Signedness, INPUT_SCALE};
use crate::arch::{NetworkSpec, Shape};
use crate::geometry::Pose;

/// Coarse kernel category of an [`IntOp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntOpKind {
    Conv,
    Dense,
    MaxPool,
    AvgPool,
    Add,
}

/// One integer kernel. Weight layers carry int8 weights, int32 biases and
/// one requantizer per output channel; additions carry `[main, skip]`
/// requantizers; pools carry nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct IntOp {
    pub name: String,
    pub weights: Vec<i8>,
    pub bias: Vec<i32>,
    pub requant: Vec<Requant>,
    pub output: OutputQuant,
}

/// Network executable with integer multiply-accumulate only; the remaining
/// real numbers are the scales needed to read its outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct IntNetwork {
    spec: NetworkSpec,
    fused: Vec<FusedOp>,
    ops: Vec<IntOp>,
}

/// Integer values at an op boundary with their scales (one, or one per channel).
#[derive(Debug, Clone, PartialEq)]
pub struct Boundary {
    pub shape: Shape,
    pub values: Vec<i32>,
    pub scales: Vec<f64>,
}

impl Boundary {
    pub fn dequantize(&self) -> Vec<f64> {
        let per = self.shape.height * self.shape.width;
        self.values
            .iter()
            .enumerate()
            .map(|(i, &v)| v as f64 * self.scales[if self.scales.len() == 1 { 0 } else { i / per }])
            .collect()
    }
}

/// Converts grid-valued weights and biases into their integer indices.
pub fn integerize(fq: &FakeQuantNetwork) -> Result<IntNetwork, QuantError> {
    let mut ops = Vec::with_capacity(fq.ops().len());
    for (j, op) in fq.ops().iter().enumerate() {
        let p = &op.params;
        let (weights, bias) = if op.fused.has_weights() {
            let in_scale = fq.boundary_quant(j).scale(0);
            let per = op.weights.len() / op.bias.len();
            let w = op
                .weights
                .iter()
                .enumerate()
                .map(|(i, &w)| round_half_away(w / p.weight_scales[i / per]) as i8)
                .collect();
            let b = op
                .bias
                .iter()
                .zip(&p.weight_scales)
                .map(|(&b, &s)| {
                    let q = round_half_away(b / (s * in_scale));
                    if q.abs() >= i32::MAX as f64 {
                        Err(QuantError::AccumulatorOverflow {
                            layer: op.name.clone(),
                        })
                    } else {
                        Ok(q as i32)
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            (w, b)
        } else {
            (Vec::new(), Vec::new())
        };
        ops.push(IntOp {
            name: op.name.clone(),
            weights,
            bias,
            requant: p.requant.clone(),
            output: p.output.clone(),
        });
    }
    IntNetwork::from_parts(fq.spec().clone(), ops)
}

impl IntNetwork {
    /// Assembles a network from per-kernel integer data, checking every
    /// length and that no accumulator can leave the 32-bit range.
    pub fn from_parts(spec: NetworkSpec, ops: Vec<IntOp>) -> Result<Self, QuantError> {
        let fused = fuse(&spec)?;
        let mismatch = |layer: &str, reason| QuantError::ParamMismatch {
            layer: layer.into(),
            reason,
        };
        if fused.len() != ops.len() {
            return Err(mismatch(
                &spec.name,
                "one record per deployable kernel required",
            ));
        }
        let mut act = ActivationQuant::INPUT;
        for (j, (f, op)) in fused.iter().zip(&ops).enumerate() {
            let name = op.name.as_str();
            if spec.layers[f.main].name != op.name {
                return Err(mismatch(name, "record order does not match the network"));
            }
            let channels = f.out_channels();
            let is_last = j + 1 == fused.len();
            match &op.output {
                OutputQuant::Activation(a) => {
                    if !(a.scale > 0.0 && a.scale.is_finite()) {
                        return Err(QuantError::BadScale);
                    }
                    if f.relu && a.signedness != Signedness::Unsigned8 {
                        return Err(mismatch(name, "rectified output must be unsigned"));
                    }
                }
                OutputQuant::Accumulator { scales } => {
                    if !(is_last && f.has_weights() && !f.relu) || scales.len() != channels {
                        return Err(mismatch(
                            name,
                            "only an unrectified head may emit accumulators",
                        ));
                    }
                    if scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                        return Err(QuantError::BadScale);
                    }
                }
            }
            match f.kind {
                OpKind::Conv(_) | OpKind::Dense { .. } => {
                    let fan_in = match f.kind {
                        OpKind::Conv(g) => g.fan_in(),
                        OpKind::Dense { inputs, .. } => inputs,
                        _ => unreachable!(),
                    };
                    if op.weights.len() != fan_in * channels || op.bias.len() != channels {
                        return Err(mismatch(name, "weight or bias length"));
                    }
                    let wants_rq = matches!(op.output, OutputQuant::Activation(_));
                    if op.requant.len() != if wants_rq { channels } else { 0 } {
                        return Err(mismatch(name, "requantizer count"));
                    }
                    if op.weights.contains(&i8::MIN) {
                        return Err(QuantError::OutOfRange {
                            signedness: Signedness::Signed8,
                        });
                    }
                    let x_max = act.max_magnitude();
                    for (c, chunk) in op.weights.chunks(fan_in).enumerate() {
                        let worst: i64 = chunk.iter().map(|&w| (w as i64).abs()).sum::<i64>()
                            * x_max
                            + (op.bias[c] as i64).abs();
                        if worst > i32::MAX as i64 {
                            return Err(QuantError::AccumulatorOverflow {
                                layer: op.name.clone(),
                            });
                        }
                    }
                }
                OpKind::MaxPool(_) | OpKind::AvgPool(_) => {
                    let same = op.output.activation().map(|a| a.scale == act.scale);
                    if !op.weights.is_empty() || !op.requant.is_empty() || same != Some(true) {
                        return Err(mismatch(
                            name,
                            "pools keep their input grid and carry no parameters",
                        ));
                    }
                }
                OpKind::Add { .. } => {
                    if !op.weights.is_empty()
                        || op.requant.len() != 2
                        || op.output.activation().is_none()
                    {
                        return Err(mismatch(name, "additions carry exactly two requantizers"));
                    }
                }
            }
            if let Some(a) = op.output.activation() {
                act = a;
            }
        }
        Ok(Self { spec, fused, ops })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn ops(&self) -> &[IntOp] {
        &self.ops
    }

    pub fn op_kind(&self, j: usize) -> IntOpKind {
        match self.fused[j].kind {
            OpKind::Conv(_) => IntOpKind::Conv,
            OpKind::Dense { .. } => IntOpKind::Dense,
            OpKind::MaxPool(_) => IntOpKind::MaxPool,
            OpKind::AvgPool(_) => IntOpKind::AvgPool,
            OpKind::Add { .. } => IntOpKind::Add,
        }
    }

    /// Output shape of op `j`.
    pub fn op_shape(&self, j: usize) -> Shape {
        self.fused[j].output
    }

    pub fn infer(&self, input: &QTensor) -> Result<Pose, QuantError> {
        let trace = self.trace(input)?;
        pose_from_outputs(trace.last().expect("non-empty").dequantize().into_iter())
    }

    /// Integer tensors at every op boundary, starting with the input.
    pub fn trace(&self, input: &QTensor) -> Result<Vec<Boundary>, QuantError> {
        if input.shape() != self.spec.input {
            return Err(QuantError::ShapeMismatch {
                expected: self.spec.input,
                found_elements: input.shape().elements(),
            });
        }
        if input.signedness() != Signedness::Unsigned8 {
            return Err(QuantError::OutOfRange {
                signedness: input.signedness(),
            });
        }
        if input.scale() != INPUT_SCALE {
            return Err(QuantError::InputScale {
                expected: INPUT_SCALE,
                found: input.scale(),
            });
        }
        let mut values: Vec<Vec<i32>> = Vec::with_capacity(self.ops.len() + 1);
        values.push(input.values().to_vec());
        for j in 0..self.ops.len() {
            let out = self.run_op(j, &values);
            values.push(out);
        }
        Ok(values
            .into_iter()
            .enumerate()
            .map(|(b, values)| {
                let (shape, scales) = if b == 0 {
                    (self.spec.input, alloc::vec![INPUT_SCALE])
                } else {
                    let scales = match &self.ops[b - 1].output {
                        OutputQuant::Activation(a) => alloc::vec![a.scale],
                        OutputQuant::Accumulator { scales } => scales.clone(),
                    };
                    (self.fused[b - 1].output, scales)
                };
                Boundary {
                    shape,
                    values,
                    scales,
                }
            })
            .collect())
    }

    fn run_op(&self, j: usize, values: &[Vec<i32>]) -> Vec<i32> {
        let (f, op) = (&self.fused[j], &self.ops[j]);
        let x = &values[j];
        let clamp = |v: i64, a: ActivationQuant| {
            let (lo, hi) = a.bounds();
            v.clamp(lo as i64, hi as i64) as i32
        };
        let emit = |acc: i32, c: usize| match &op.output {
            OutputQuant::Activation(a) => clamp(op.requant[c].apply(acc as i64), *a),
            OutputQuant::Accumulator { .. } => acc,
        };
        match f.kind {
            OpKind::Conv(g) => g
                .outputs()
                .map(|(_, oc, oy, ox)| {
                    let mut acc = op.bias[oc];
                    g.for_each_tap(oc, oy, ox, |ii, wi| acc += op.weights[wi] as i32 * x[ii]);
                    emit(acc, oc)
                })
                .collect(),
            OpKind::Dense { inputs, .. } => op
                .bias
                .iter()
                .enumerate()
                .map(|(o, &b)| {
                    let row = &op.weights[o * inputs..(o + 1) * inputs];
                    let acc = row
                        .iter()
                        .zip(x)
                        .fold(b, |acc, (&w, &v)| acc + w as i32 * v);
                    emit(acc, o)
                })
                .collect(),
            OpKind::MaxPool(g) => g
                .outputs()
                .map(|(_, c, oy, ox)| {
                    let mut m = i32::MIN;
                    g.for_each_tap(c, oy, ox, |ii, _| m = m.max(x[ii]));
                    if f.relu {
                        m.max(0)
                    } else {
                        m
                    }
                })
                .collect(),
            OpKind::AvgPool(g) => {
                let out = op.output.activation().expect("validated");
                g.outputs()
                    .map(|(_, c, oy, ox)| {
                        let (mut s, mut n) = (0i64, 0i64);
                        g.for_each_tap(c, oy, ox, |ii, _| {
                            s += x[ii] as i64;
                            n += 1;
                        });
                        let q = if s >= 0 {
                            (s + n / 2) / n
                        } else {
                            -((-s + n / 2) / n)
                        };
                        clamp(q, out)
                    })
                    .collect()
            }
            OpKind::Add { skip } => {
                let out = op.output.activation().expect("validated");
                x.iter()
                    .zip(&values[skip])
                    .map(|(&a, &b)| {
                        clamp(
                            op.requant[0].apply(a as i64) + op.requant[1].apply(b as i64),
                            out,
                        )
                    })
                    .collect()
            }
        }
    }
}
