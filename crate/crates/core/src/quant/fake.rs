use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::float::{FloatNetwork, LayerParams, BN_EPSILON};
use super::graph::{fuse, FusedOp, OpKind};
use super::requant::{round_half_away, Requant};
use super::{pose_from_outputs, QuantError, Signedness, Tensor, INPUT_SCALE};
use crate::arch::NetworkSpec;
use crate::geometry::Pose;

/// Activation clipping bound: this quantile of `|activation|` over the calibration set.
pub const CLIP_PERCENTILE: f64 = 0.999;

/// Largest weight magnitude on the symmetric grid.
const WEIGHT_LEVELS: f64 = 127.0;

/// Uniform activation grid: integer `q` represents `q * scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationQuant {
    pub scale: f64,
    pub signedness: Signedness,
}

impl ActivationQuant {
    pub const INPUT: ActivationQuant = ActivationQuant {
        scale: INPUT_SCALE,
        signedness: Signedness::Unsigned8,
    };

    /// 256 levels over `[0, alpha]`.
    pub fn unsigned(alpha: f64) -> Self {
        Self {
            scale: alpha / 255.0,
            signedness: Signedness::Unsigned8,
        }
    }

    /// Symmetric levels over `[-alpha, alpha]`.
    pub fn signed(alpha: f64) -> Self {
        Self {
            scale: alpha / 127.0,
            signedness: Signedness::Signed8,
        }
    }

    /// Integer clamp bounds.
    pub fn bounds(&self) -> (f64, f64) {
        match self.signedness {
            Signedness::Unsigned8 => (0.0, 255.0),
            _ => (-127.0, 127.0),
        }
    }

    /// Grid index of a real value, clamped to the representable range.
    pub fn quantize(&self, v: f64) -> f64 {
        let (lo, hi) = self.bounds();
        round_half_away(v / self.scale).clamp(lo, hi)
    }

    pub(crate) fn max_magnitude(&self) -> i64 {
        self.bounds().1 as i64
    }
}

/// Nearest representable activation.
pub fn activation_grid(v: f64, act: ActivationQuant) -> f64 {
    act.quantize(v) * act.scale
}

/// Symmetric per-channel weight scale `max|w| / 127` (1 for an all-zero channel).
pub fn weight_scale(channel: &[f64]) -> f64 {
    let m = channel.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    if m > 0.0 {
        m / WEIGHT_LEVELS
    } else {
        1.0
    }
}

/// Nearest point of the symmetric weight grid with spacing `scale`.
pub fn quantize_weight(w: f64, scale: f64) -> f64 {
    round_half_away(w / scale).clamp(-WEIGHT_LEVELS, WEIGHT_LEVELS) * scale
}

/// Clipping bound from a sample of activation magnitudes. Falls back to the
/// maximum when the quantile is zero; `None` if every value is zero.
pub fn calibrate_clip(magnitudes: &mut [f32]) -> Option<f64> {
    if magnitudes.is_empty() {
        return None;
    }
    let rank = libm::ceil(CLIP_PERCENTILE * magnitudes.len() as f64) as usize;
    let idx = rank.clamp(1, magnitudes.len()) - 1;
    let (_, q, _) = magnitudes.select_nth_unstable_by(idx, f32::total_cmp);
    let q = *q as f64;
    if q > 0.0 {
        return Some(q);
    }
    let max = magnitudes.iter().fold(0.0f32, |m, &v| m.max(v)) as f64;
    (max > 0.0).then_some(max)
}

/// How an op's output is represented.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OutputQuant {
    Activation(ActivationQuant),
    /// Raw accumulators of the network head with one scale per output channel.
    Accumulator {
        scales: Vec<f64>,
    },
}

impl OutputQuant {
    pub(crate) fn activation(&self) -> Option<ActivationQuant> {
        match self {
            OutputQuant::Activation(a) => Some(*a),
            OutputQuant::Accumulator { .. } => None,
        }
    }

    /// Scale of element `channel`.
    pub fn scale(&self, channel: usize) -> f64 {
        match self {
            OutputQuant::Activation(a) => a.scale,
            OutputQuant::Accumulator { scales } => scales[channel],
        }
    }
}

/// Quantization parameters of one deployable kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    /// Calibrated clipping bound of the output, for ops that start a new grid.
    pub clip: Option<f64>,
    /// One per output channel for weight layers, empty otherwise.
    pub weight_scales: Vec<f64>,
    /// Per output channel for weight layers, `[main, skip]` for additions.
    pub requant: Vec<Requant>,
    pub output: OutputQuant,
}

/// One fake-quantized kernel with weights and bias held as grid values.
#[derive(Debug, Clone, PartialEq)]
pub struct FakeQuantOp {
    pub name: String,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub params: QuantParams,
    pub(crate) fused: FusedOp,
}

/// Network whose weights and activations sit on 8-bit grids while the
/// arithmetic stays real-valued.
#[derive(Debug, Clone, PartialEq)]
pub struct FakeQuantNetwork {
    spec: NetworkSpec,
    ops: Vec<FakeQuantOp>,
}

struct Folded {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

fn fold(float: &FloatNetwork, op: &FusedOp) -> Folded {
    let LayerParams::Linear { weights, bias } = &float.params()[op.main] else {
        unreachable!("weight op carries linear parameters")
    };
    let mut w: Vec<f64> = weights.iter().map(|&v| v as f64).collect();
    let mut b: Vec<f64> = bias.iter().map(|&v| v as f64).collect();
    if let Some(bn) = op.bn {
        let LayerParams::BatchNorm {
            gamma,
            beta,
            mean,
            var,
        } = &float.params()[bn]
        else {
            unreachable!("batch-norm op carries batch-norm parameters")
        };
        let per = w.len() / b.len();
        for c in 0..b.len() {
            let k = gamma[c] as f64 / libm::sqrt(var[c] as f64 + BN_EPSILON as f64);
            w[c * per..(c + 1) * per].iter_mut().for_each(|v| *v *= k);
            b[c] = (b[c] - mean[c] as f64) * k + beta[c] as f64;
        }
    }
    Folded {
        weights: w,
        bias: b,
    }
}

/// Calibrates activation grids on `calibration`, folds batch-norm into the
/// preceding kernel and snaps weights and biases onto their grids.
pub fn fake_quantize(
    float: &FloatNetwork,
    calibration: &[Tensor],
) -> Result<FakeQuantNetwork, QuantError> {
    if calibration.is_empty() {
        return Err(QuantError::EmptyCalibration);
    }
    let spec = float.spec();
    let fused = fuse(spec)?;
    let needs_clip: Vec<bool> = fused
        .iter()
        .enumerate()
        .map(|(j, op)| match op.kind {
            OpKind::Add { .. } => true,
            OpKind::Conv(_) | OpKind::Dense { .. } => op.relu || j + 1 < fused.len(),
            OpKind::MaxPool(_) | OpKind::AvgPool(_) => false,
        })
        .collect();
    let mut samples: Vec<Vec<f32>> = vec![Vec::new(); fused.len()];
    for frame in calibration {
        let trace = float.trace(frame)?;
        for (j, op) in fused.iter().enumerate() {
            if needs_clip[j] {
                samples[j].extend(trace[op.last + 1].data().iter().map(|v| v.abs()));
            }
        }
    }

    let mut boundaries: Vec<ActivationQuant> = vec![ActivationQuant::INPUT];
    let mut ops = Vec::with_capacity(fused.len());
    for (j, op) in fused.into_iter().enumerate() {
        let name = spec.layers[op.main].name.clone();
        let input = boundaries[j];
        let clip = if needs_clip[j] {
            let alpha = calibrate_clip(&mut samples[j]).ok_or_else(|| {
                QuantError::DegenerateActivation {
                    layer: spec.layers[op.last].name.clone(),
                }
            })?;
            samples[j] = Vec::new();
            Some(alpha)
        } else {
            None
        };
        let fresh = |alpha: f64| {
            if op.relu {
                ActivationQuant::unsigned(alpha)
            } else {
                ActivationQuant::signed(alpha)
            }
        };
        let fq = match op.kind {
            OpKind::Conv(_) | OpKind::Dense { .. } => {
                let Folded { weights, bias } = fold(float, &op);
                let per = weights.len() / bias.len();
                let scales: Vec<f64> = weights.chunks(per).map(weight_scale).collect();
                let wq: Vec<f64> = weights
                    .iter()
                    .enumerate()
                    .map(|(i, &w)| quantize_weight(w, scales[i / per]))
                    .collect();
                let acc_scales: Vec<f64> = scales.iter().map(|s| s * input.scale).collect();
                let bq: Vec<f64> = bias
                    .iter()
                    .zip(&acc_scales)
                    .map(|(&b, &s)| round_half_away(b / s) * s)
                    .collect();
                let (requant, output) = match clip {
                    Some(alpha) => {
                        let out = fresh(alpha);
                        let rq = acc_scales
                            .iter()
                            .map(|s| Requant::from_ratio(s / out.scale))
                            .collect::<Result<Vec<_>, _>>()?;
                        (rq, OutputQuant::Activation(out))
                    }
                    None => (Vec::new(), OutputQuant::Accumulator { scales: acc_scales }),
                };
                FakeQuantOp {
                    name,
                    weights: wq,
                    bias: bq,
                    params: QuantParams {
                        clip,
                        weight_scales: scales,
                        requant,
                        output,
                    },
                    fused: op,
                }
            }
            OpKind::MaxPool(_) | OpKind::AvgPool(_) => {
                let mut out = input;
                if op.relu {
                    out.signedness = Signedness::Unsigned8;
                }
                FakeQuantOp {
                    name,
                    weights: Vec::new(),
                    bias: Vec::new(),
                    params: QuantParams {
                        clip: None,
                        weight_scales: Vec::new(),
                        requant: Vec::new(),
                        output: OutputQuant::Activation(out),
                    },
                    fused: op,
                }
            }
            OpKind::Add { skip } => {
                let out = fresh(clip.expect("additions are calibrated"));
                let requant = vec![
                    Requant::from_ratio(input.scale / out.scale)?,
                    Requant::from_ratio(boundaries[skip].scale / out.scale)?,
                ];
                FakeQuantOp {
                    name,
                    weights: Vec::new(),
                    bias: Vec::new(),
                    params: QuantParams {
                        clip,
                        weight_scales: Vec::new(),
                        requant,
                        output: OutputQuant::Activation(out),
                    },
                    fused: op,
                }
            }
        };
        if let Some(a) = fq.params.output.activation() {
            boundaries.push(a);
        }
        ops.push(fq);
    }
    Ok(FakeQuantNetwork {
        spec: spec.clone(),
        ops,
    })
}

impl FakeQuantNetwork {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn ops(&self) -> &[FakeQuantOp] {
        &self.ops
    }

    /// Grid of boundary `b` (0 is the network input, `j + 1` the output of op `j`).
    pub fn boundary_quant(&self, b: usize) -> OutputQuant {
        if b == 0 {
            OutputQuant::Activation(ActivationQuant::INPUT)
        } else {
            self.ops[b - 1].params.output.clone()
        }
    }

    pub fn infer(&self, input: &Tensor) -> Result<Pose, QuantError> {
        let trace = self.trace(input)?;
        pose_from_outputs(trace.last().expect("non-empty").iter().copied())
    }

    /// Real values at every op boundary, starting with the quantized input.
    pub fn trace(&self, input: &Tensor) -> Result<Vec<Vec<f64>>, QuantError> {
        if input.shape() != self.spec.input {
            return Err(QuantError::ShapeMismatch {
                expected: self.spec.input,
                found_elements: input.shape().elements(),
            });
        }
        let in_q = ActivationQuant::INPUT;
        let mut bounds: Vec<Vec<f64>> = Vec::with_capacity(self.ops.len() + 1);
        bounds.push(
            input
                .data()
                .iter()
                .map(|&v| activation_grid(v as f64, in_q))
                .collect(),
        );
        for (j, op) in self.ops.iter().enumerate() {
            let in_act = self
                .boundary_quant(j)
                .activation()
                .expect("inner boundaries are activations");
            let x = &bounds[j];
            let out = forward_op(op, in_act, x, &bounds, |b| self.boundary_quant(b));
            bounds.push(out);
        }
        Ok(bounds)
    }
}

fn finish(q_acc: f64, rq: Requant, out: ActivationQuant) -> f64 {
    let (lo, hi) = out.bounds();
    rq.apply_real(q_acc).clamp(lo, hi) * out.scale
}

fn forward_op(
    op: &FakeQuantOp,
    input: ActivationQuant,
    x: &[f64],
    bounds: &[Vec<f64>],
    boundary_quant: impl Fn(usize) -> OutputQuant,
) -> Vec<f64> {
    let f = &op.fused;
    let p = &op.params;
    // accumulator in grid units, re-derived from the real-valued sum
    let regrid = |z: f64, c: usize| round_half_away(z / (p.weight_scales[c] * input.scale));
    let emit = |acc: f64, c: usize| match &p.output {
        OutputQuant::Activation(a) => finish(acc, p.requant[c], *a),
        OutputQuant::Accumulator { scales } => acc * scales[c],
    };
    match f.kind {
        OpKind::Conv(g) => g
            .outputs()
            .map(|(_, oc, oy, ox)| {
                let mut z = 0.0f64;
                g.for_each_tap(oc, oy, ox, |ii, wi| z += op.weights[wi] * x[ii]);
                emit(regrid(z + op.bias[oc], oc), oc)
            })
            .collect(),
        OpKind::Dense { inputs, .. } => op
            .bias
            .iter()
            .enumerate()
            .map(|(o, b)| {
                let row = &op.weights[o * inputs..(o + 1) * inputs];
                let z = row.iter().zip(x).fold(0.0f64, |acc, (w, v)| acc + w * v);
                emit(regrid(z + b, o), o)
            })
            .collect(),
        OpKind::MaxPool(g) => g
            .outputs()
            .map(|(_, c, oy, ox)| {
                let mut m = f64::NEG_INFINITY;
                g.for_each_tap(c, oy, ox, |ii, _| m = m.max(x[ii]));
                if f.relu {
                    m.max(0.0)
                } else {
                    m
                }
            })
            .collect(),
        OpKind::AvgPool(g) => {
            let out = p.output.activation().expect("pool output is an activation");
            let (lo, hi) = out.bounds();
            g.outputs()
                .map(|(_, c, oy, ox)| {
                    let (mut s, mut n) = (0.0f64, 0u32);
                    g.for_each_tap(c, oy, ox, |ii, _| {
                        s += round_half_away(x[ii] / input.scale);
                        n += 1;
                    });
                    round_half_away(s / n as f64).clamp(lo, hi) * out.scale
                })
                .collect()
        }
        OpKind::Add { skip } => {
            let out = p.output.activation().expect("add output is an activation");
            let skip_scale = boundary_quant(skip)
                .activation()
                .expect("skip is an activation")
                .scale;
            let (lo, hi) = out.bounds();
            x.iter()
                .zip(&bounds[skip])
                .map(|(a, b)| {
                    let qa = p.requant[0].apply_real(round_half_away(a / input.scale));
                    let qb = p.requant[1].apply_real(round_half_away(b / skip_scale));
                    (qa + qb).clamp(lo, hi) * out.scale
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::{random_input, random_small_network};
    use proptest::prelude::*;

    #[test]
    fn grid_weights_are_fixed_points() {
        let sigma = 0.01;
        for q in -127..=127 {
            let w = q as f64 * sigma;
            assert_eq!(quantize_weight(w, sigma), w);
        }
        let chan: Vec<f64> = (-127..=127).map(|q| q as f64 * sigma).collect();
        let s = weight_scale(&chan);
        assert!(chan.iter().all(|&w| quantize_weight(w, s) == w));
    }

    #[test]
    fn clip_quantile() {
        let mut v: Vec<f32> = (1..=1000).map(|i| i as f32).collect();
        assert_eq!(calibrate_clip(&mut v), Some(999.0));
        let mut z = vec![0.0f32; 10];
        assert_eq!(calibrate_clip(&mut z), None);
        let mut sparse = vec![0.0f32; 10_000];
        sparse[3] = 2.5;
        assert_eq!(calibrate_clip(&mut sparse), Some(2.5));
    }

    #[test]
    fn empty_calibration_rejected() {
        let spec = random_small_network(1);
        let float = FloatNetwork::random(spec, 1).unwrap();
        assert!(matches!(
            fake_quantize(&float, &[]),
            Err(QuantError::EmptyCalibration)
        ));
    }

    #[test]
    fn fake_quantized_tracks_float() {
        for seed in 0..20 {
            let spec = random_small_network(seed);
            let float = FloatNetwork::random(spec.clone(), seed).unwrap();
            let calib: Vec<Tensor> = (0..8).map(|i| random_input(spec.input, 1000 + i)).collect();
            let fq = fake_quantize(&float, &calib).unwrap();
            let x = random_input(spec.input, 7);
            let a = float.trace(&x).unwrap();
            let b = fq.trace(&x).unwrap();
            let out_a = a.last().unwrap().data();
            let out_b = b.last().unwrap();
            let mag = out_a.iter().fold(1e-3f32, |m, v| m.max(v.abs())) as f64;
            for (u, v) in out_a.iter().zip(out_b) {
                assert!(
                    (*u as f64 - v).abs() < 0.25 * mag + 0.05,
                    "seed {seed}: {u} vs {v}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn weight_rounding_bound(w in -10.0f64..10.0, s in 1e-3f64..1.0) {
            let clipped = w.clamp(-127.0 * s, 127.0 * s);
            prop_assert!((quantize_weight(w, s) - clipped).abs() <= s / 2.0 + 1e-12);
        }

        #[test]
        fn activation_error_within_half_step(v in 0.0f64..4.0, alpha in 0.1f64..4.0) {
            let act = ActivationQuant::unsigned(alpha);
            let err = (activation_grid(v, act) - v.min(alpha)).abs();
            prop_assert!(err <= alpha / 255.0 / 2.0 + 1e-12);
            let signed = ActivationQuant::signed(alpha);
            let err = (activation_grid(-v, signed) + v.min(alpha)).abs();
            prop_assert!(err <= alpha / 127.0 / 2.0 + 1e-12);
        }
    }
}
