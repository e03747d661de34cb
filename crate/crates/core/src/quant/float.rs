use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::ConvGeom;
use super::{pose_from_outputs, QuantError, Tensor};
use crate::arch::{LayerKind, NetworkSpec, Shape};
use crate::geometry::Pose;

pub const BN_EPSILON: f32 = 1e-5;

/// Trainable parameters of one spec layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    None,
    /// Convolution, depthwise convolution or fully-connected layer. Weights
    /// are `[out][in][kh][kw]` (`[out][kh][kw]` for depthwise, `[out][in]` for dense).
    Linear {
        weights: Vec<f32>,
        bias: Vec<f32>,
    },
    BatchNorm {
        gamma: Vec<f32>,
        beta: Vec<f32>,
        mean: Vec<f32>,
        var: Vec<f32>,
    },
}

/// Full-precision network: the first of the three quantization stages.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatNetwork {
    spec: NetworkSpec,
    shapes: Vec<Shape>,
    params: Vec<LayerParams>,
}

impl FloatNetwork {
    pub fn from_params(spec: NetworkSpec, params: Vec<LayerParams>) -> Result<Self, QuantError> {
        let shapes = spec.shapes()?;
        if params.len() != spec.layers.len() {
            return Err(QuantError::ParamMismatch {
                layer: spec.name.clone(),
                reason: "one parameter entry per layer required",
            });
        }
        for (i, (layer, p)) in spec.layers.iter().zip(&params).enumerate() {
            let bad = |reason| QuantError::ParamMismatch {
                layer: layer.name.clone(),
                reason,
            };
            match (layer.kind, p) {
                (k, LayerParams::Linear { weights, bias }) if k.has_weights() => {
                    if weights.len() as u64 != layer.weight_count()
                        || bias.len() != layer.out_channels
                    {
                        return Err(bad("weight or bias length"));
                    }
                    if weights.iter().chain(bias).any(|v| !v.is_finite()) {
                        return Err(bad("non-finite parameter"));
                    }
                }
                (
                    LayerKind::BatchNorm,
                    LayerParams::BatchNorm {
                        gamma,
                        beta,
                        mean,
                        var,
                    },
                ) => {
                    let c = shapes[i].channels;
                    if [gamma, beta, mean, var].iter().any(|v| v.len() != c) {
                        return Err(bad("batch-norm length"));
                    }
                    if var.iter().any(|v| v.is_nan() || *v < 0.0) {
                        return Err(bad("negative variance"));
                    }
                }
                (k, LayerParams::None) if !k.has_weights() && k != LayerKind::BatchNorm => {}
                _ => return Err(bad("parameter kind does not match layer kind")),
            }
        }
        Ok(Self {
            spec,
            shapes,
            params,
        })
    }

    /// Seeded He-uniform weights, small biases and near-identity batch-norm.
    pub fn random(spec: NetworkSpec, seed: u64) -> Result<Self, QuantError> {
        let shapes = spec.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = spec
            .layers
            .iter()
            .enumerate()
            .map(|(i, layer)| match layer.kind {
                k if k.has_weights() => {
                    let n = layer.weight_count() as usize;
                    let fan_in = (n / layer.out_channels).max(1) as f32;
                    let bound = libm::sqrtf(6.0 / fan_in);
                    LayerParams::Linear {
                        weights: (0..n).map(|_| rng.random_range(-bound..bound)).collect(),
                        bias: (0..layer.out_channels)
                            .map(|_| rng.random_range(-0.1..0.1))
                            .collect(),
                    }
                }
                LayerKind::BatchNorm => {
                    let c = shapes[i].channels;
                    LayerParams::BatchNorm {
                        gamma: (0..c).map(|_| rng.random_range(0.5..1.5)).collect(),
                        beta: (0..c).map(|_| rng.random_range(-0.1..0.1)).collect(),
                        mean: (0..c).map(|_| rng.random_range(-0.1..0.1)).collect(),
                        var: (0..c).map(|_| rng.random_range(0.5..1.5)).collect(),
                    }
                }
                _ => LayerParams::None,
            })
            .collect();
        Self::from_params(spec, params)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[LayerParams] {
        &self.params
    }

    /// Deterministic forward pass returning the 4-vector pose head.
    pub fn infer(&self, input: &Tensor) -> Result<Pose, QuantError> {
        let trace = self.trace(input)?;
        pose_from_outputs(
            trace
                .last()
                .expect("at least one layer")
                .data()
                .iter()
                .map(|&v| v as f64),
        )
    }

    /// Forward pass returning every tensor: the input followed by each layer's output.
    pub fn trace(&self, input: &Tensor) -> Result<Vec<Tensor>, QuantError> {
        if input.shape() != self.spec.input {
            return Err(QuantError::ShapeMismatch {
                expected: self.spec.input,
                found_elements: input.shape().elements(),
            });
        }
        let mut tensors: Vec<Tensor> = Vec::with_capacity(self.spec.layers.len() + 1);
        tensors.push(input.clone());
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let x = tensors[i].data();
            let (in_shape, out_shape) = (self.shapes[i], self.shapes[i + 1]);
            let out: Vec<f32> = match (layer.kind, &self.params[i]) {
                (
                    LayerKind::Conv2D | LayerKind::DepthwiseConv2D,
                    LayerParams::Linear { weights, bias },
                ) => conv2d(
                    &ConvGeom::from_layer(layer, in_shape, out_shape),
                    x,
                    weights,
                    bias,
                ),
                (LayerKind::FullyConnected, LayerParams::Linear { weights, bias }) => {
                    dense(x, weights, bias)
                }
                (
                    LayerKind::BatchNorm,
                    LayerParams::BatchNorm {
                        gamma,
                        beta,
                        mean,
                        var,
                    },
                ) => {
                    let hw = in_shape.height * in_shape.width;
                    x.iter()
                        .enumerate()
                        .map(|(j, &v)| {
                            let c = j / hw;
                            (v - mean[c]) / libm::sqrtf(var[c] + BN_EPSILON) * gamma[c] + beta[c]
                        })
                        .collect()
                }
                (LayerKind::ReLU, _) => x.iter().map(|&v| v.max(0.0)).collect(),
                (LayerKind::MaxPool2D, _) => {
                    let g = ConvGeom::from_layer(layer, in_shape, out_shape);
                    g.outputs()
                        .map(|(_, c, y, xx)| {
                            let mut m = f32::NEG_INFINITY;
                            g.for_each_tap(c, y, xx, |ii, _| m = m.max(x[ii]));
                            m
                        })
                        .collect()
                }
                (LayerKind::AvgPool2D, _) => {
                    let g = ConvGeom::from_layer(layer, in_shape, out_shape);
                    let area = (layer.kernel.0 * layer.kernel.1) as f32;
                    g.outputs()
                        .map(|(_, c, y, xx)| {
                            let mut s = 0.0f32;
                            g.for_each_tap(c, y, xx, |ii, _| s += x[ii]);
                            s / area
                        })
                        .collect()
                }
                (LayerKind::Add, _) => {
                    let skip = tensors[layer.skip.expect("validated")].data();
                    x.iter().zip(skip).map(|(a, b)| a + b).collect()
                }
                _ => unreachable!("parameters validated in from_params"),
            };
            tensors.push(Tensor::new(out_shape, out)?);
        }
        Ok(tensors)
    }
}

/// Accumulates each output over `(input channel, ky, kx)` then adds the bias.
pub(crate) fn conv2d(g: &ConvGeom, x: &[f32], w: &[f32], bias: &[f32]) -> Vec<f32> {
    g.outputs()
        .map(|(_, oc, oy, ox)| {
            let mut acc = 0.0f32;
            g.for_each_tap(oc, oy, ox, |ii, wi| acc += w[wi] * x[ii]);
            acc + bias[oc]
        })
        .collect()
}

pub(crate) fn dense(x: &[f32], w: &[f32], bias: &[f32]) -> Vec<f32> {
    bias.iter()
        .enumerate()
        .map(|(o, b)| {
            let row = &w[o * x.len()..(o + 1) * x.len()];
            row.iter()
                .zip(x)
                .fold(0.0f32, |acc, (wi, xi)| acc + wi * xi)
                + b
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::LayerSpec;
    use alloc::vec;

    /// Six nested loops over an explicitly zero-padded input.
    #[allow(clippy::too_many_arguments)]
    fn reference_conv(
        x: &[f32],
        (cin, h, w): (usize, usize, usize),
        wt: &[f32],
        bias: &[f32],
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Vec<f32> {
        let (ph, pw) = (h + 2 * pad, w + 2 * pad);
        let mut padded = vec![0.0f32; cin * ph * pw];
        for c in 0..cin {
            for y in 0..h {
                for xx in 0..w {
                    padded[(c * ph + y + pad) * pw + xx + pad] = x[(c * h + y) * w + xx];
                }
            }
        }
        let (oh, ow) = ((ph - k) / stride + 1, (pw - k) / stride + 1);
        let mut out = vec![0.0f32; cout * oh * ow];
        for oc in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0f32;
                    for ic in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let v =
                                    padded[(ic * ph + oy * stride + ky) * pw + ox * stride + kx];
                                acc += wt[((oc * cin + ic) * k + ky) * k + kx] * v;
                            }
                        }
                    }
                    out[(oc * oh + oy) * ow + ox] = acc + bias[oc];
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_loop_nest() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (cin, cout, k, stride, pad) in [
            (1, 1, 3, 1, 0),
            (2, 3, 3, 1, 1),
            (3, 2, 3, 2, 1),
            (2, 2, 5, 2, 2),
        ] {
            let (h, w) = (5, 5);
            let x: Vec<f32> = (0..cin * h * w)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let wt: Vec<f32> = (0..cout * cin * k * k)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let b: Vec<f32> = (0..cout).map(|_| rng.random_range(-1.0..1.0)).collect();
            let layer = LayerSpec::conv("c", k, stride, pad, cin, cout);
            let ins = Shape::new(cin, h, w);
            let outs = layer.output_shape(ins).unwrap();
            let got = conv2d(&ConvGeom::from_layer(&layer, ins, outs), &x, &wt, &b);
            assert_eq!(
                got,
                reference_conv(&x, (cin, h, w), &wt, &b, cout, k, stride, pad)
            );
        }
    }

    #[test]
    fn identity_conv_then_dense() {
        let spec = NetworkSpec::new(
            "id",
            Shape::new(1, 2, 2),
            vec![
                LayerSpec::conv("c", 1, 1, 0, 1, 1),
                LayerSpec::fully_connected("fc", 4, 4),
            ],
        );
        let fc_w: Vec<f32> = (0..16).map(|i| i as f32 * 0.25).collect();
        let fc_b = vec![0.5, -0.5, 1.0, 0.0];
        let net = FloatNetwork::from_params(
            spec,
            vec![
                LayerParams::Linear {
                    weights: vec![1.0],
                    bias: vec![0.0],
                },
                LayerParams::Linear {
                    weights: fc_w.clone(),
                    bias: fc_b.clone(),
                },
            ],
        )
        .unwrap();
        let pose = net
            .infer(&Tensor::filled(Shape::new(1, 2, 2), 1.0))
            .unwrap();
        let expect: Vec<f64> = (0..4)
            .map(|o| (fc_w[o * 4..o * 4 + 4].iter().sum::<f32>() + fc_b[o]) as f64)
            .collect();
        assert_eq!([pose.x, pose.y, pose.z], [expect[0], expect[1], expect[2]]);
        assert!((pose.phi - crate::geometry::wrap_angle(expect[3])).abs() < 1e-12);
    }

    #[test]
    fn rejects_wrong_input_and_params() {
        let spec = NetworkSpec::new(
            "s",
            Shape::new(1, 2, 2),
            vec![LayerSpec::conv("c", 1, 1, 0, 1, 1)],
        );
        assert!(FloatNetwork::from_params(spec.clone(), vec![LayerParams::None]).is_err());
        let net = FloatNetwork::random(spec, 1).unwrap();
        assert!(net.infer(&Tensor::zeros(Shape::new(1, 3, 3))).is_err());
    }
}
