//! Three numeric regimes for the same network: full precision
//! ([`FloatNetwork`]), fake-quantized ([`FakeQuantNetwork`]) and
//! integer-deployable ([`IntNetwork`]).
//!
//! Each stage is built only from the one before it, so the stage order is
//! enforced by the types.

mod crop;
mod fake;
mod float;
mod graph;
mod integer;
mod requant;
mod tensor;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{ArchError, LayerSpec, NetworkSpec, Shape};
use crate::geometry::Pose;

pub use crop::{crop_input, crop_pixels, CROP_HEIGHT, CROP_TOP, FRAME_SIZE};
pub use fake::{
    activation_grid, calibrate_clip, fake_quantize, quantize_weight, weight_scale, ActivationQuant,
    FakeQuantNetwork, FakeQuantOp, OutputQuant, QuantParams, CLIP_PERCENTILE,
};
pub use float::{FloatNetwork, LayerParams, BN_EPSILON};
pub use integer::{integerize, Boundary, IntNetwork, IntOp, IntOpKind};
pub use requant::{round_half_away, Requant, REQUANT_TOLERANCE};
pub use tensor::{QTensor, Signedness, Tensor};

/// Scale of the 8-bit network input: pixel `p` represents `p / 255`.
pub const INPUT_SCALE: f64 = 1.0 / 255.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuantError {
    #[error("expected {expected} ({} elements), found {found_elements}", expected.elements())]
    ShapeMismatch {
        expected: Shape,
        found_elements: usize,
    },
    #[error("tensor contains a non-finite value")]
    NonFinite,
    #[error("scale must be positive and finite")]
    BadScale,
    #[error("value outside the {signedness:?} range")]
    OutOfRange { signedness: Signedness },
    #[error("scale ratio {ratio} cannot be approximated by a 16-bit multiplier and shift")]
    RequantRange { ratio: f64 },
    #[error("layer `{layer}`: {reason}")]
    UnsupportedPattern { layer: String, reason: &'static str },
    #[error("layer `{layer}`: {reason}")]
    ParamMismatch { layer: String, reason: &'static str },
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("layer `{layer}`: all calibration activations are zero")]
    DegenerateActivation { layer: String },
    #[error("layer `{layer}`: worst-case accumulator exceeds 32 bits")]
    AccumulatorOverflow { layer: String },
    #[error("input scale {found} differs from the network input scale {expected}")]
    InputScale { expected: f64, found: f64 },
    #[error("network output has {0} values, a pose needs 4")]
    OutputNotPose(usize),
    #[error(transparent)]
    Arch(#[from] ArchError),
}

/// Numeric regime of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    FullPrecision,
    FakeQuantized,
    IntegerDeployable,
}

impl Stage {
    pub const fn as_str(self) -> &'static str {
        match self {
            Stage::FullPrecision => "full-precision",
            Stage::FakeQuantized => "fake-quantized",
            Stage::IntegerDeployable => "integer-deployable",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Stage::FullPrecision,
            Stage::FakeQuantized,
            Stage::IntegerDeployable,
        ]
        .into_iter()
        .find(|st| st.as_str() == s)
    }
}

pub(crate) fn pose_from_outputs(values: impl Iterator<Item = f64>) -> Result<Pose, QuantError> {
    let v: Vec<f64> = values.collect();
    match v[..] {
        [x, y, z, phi] => Ok(Pose::new(x, y, z, phi)),
        _ => Err(QuantError::OutputNotPose(v.len())),
    }
}

/// A seeded small network exercising every kernel type: convolutions of
/// varied geometry, depthwise convolutions, both pools, optional batch-norm
/// and ReLU, residual additions and a 4-output dense head.
pub fn random_small_network(seed: u64) -> NetworkSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shape = Shape::new(1, rng.random_range(6..=14), rng.random_range(6..=14));
    let input = shape;
    let mut layers: Vec<LayerSpec> = Vec::new();
    let blocks = rng.random_range(2..=4);
    for b in 0..blocks {
        let choice = if b == 0 { 0 } else { rng.random_range(0..5) };
        let name = |s: &str| format!("b{b}.{s}");
        let before = layers.len();
        match choice {
            // convolution
            0 | 1 => {
                let k = [1, 3, 5][rng.random_range(0..3)];
                let s = if shape.height >= 6 && shape.width >= 6 {
                    rng.random_range(1..=2)
                } else {
                    1
                };
                let p = rng.random_range(0..=k / 2);
                let cout = rng.random_range(1..=6);
                let conv = LayerSpec::conv(&name("conv"), k, s, p, shape.channels, cout);
                if conv.output_shape(shape).is_err() {
                    layers.push(LayerSpec::conv(
                        &name("conv"),
                        1,
                        1,
                        0,
                        shape.channels,
                        cout,
                    ));
                } else {
                    layers.push(conv);
                }
            }
            2 => {
                layers.push(LayerSpec::depthwise(&name("dw"), 3, 1, 1, shape.channels));
            }
            3 if shape.height >= 4 && shape.width >= 4 => {
                if rng.random_bool(0.5) {
                    layers.push(LayerSpec::max_pool(&name("maxpool"), 2, 2, shape.channels));
                } else {
                    layers.push(LayerSpec::avg_pool(
                        &name("avgpool"),
                        (2, 2),
                        shape.channels,
                    ));
                }
            }
            _ => {
                // residual block: conv (+bn) (+relu), conv (+bn), add
                let c = shape.channels;
                let src = layers.len();
                layers.push(LayerSpec::conv(&name("res1"), 3, 1, 1, c, c));
                if rng.random_bool(0.5) {
                    layers.push(LayerSpec::batch_norm(&name("res1_bn"), c));
                }
                layers.push(LayerSpec::relu(&name("res1_relu"), c));
                layers.push(LayerSpec::conv(&name("res2"), 1, 1, 0, c, c));
                if rng.random_bool(0.5) {
                    layers.push(LayerSpec::batch_norm(&name("res2_bn"), c));
                }
                layers.push(LayerSpec::add(&name("add"), c, src));
                if rng.random_bool(0.5) {
                    layers.push(LayerSpec::relu(&name("add_relu"), c));
                }
            }
        }
        if layers.len() == before + 1 && layers[before].kind.has_weights() {
            let c = layers[before].out_channels;
            if rng.random_bool(0.5) {
                layers.push(LayerSpec::batch_norm(&name("bn"), c));
            }
            if rng.random_bool(0.7) {
                layers.push(LayerSpec::relu(&name("relu"), c));
            }
        }
        shape = NetworkSpec::new("tmp", input, layers.clone())
            .output_shape()
            .expect("generator emits consistent shapes");
    }
    layers.push(LayerSpec::fully_connected("fc", shape.elements(), 4));
    NetworkSpec::new(format!("random-{seed}"), input, layers)
}

/// Seeded uniform input in `[0, 1]` on the 8-bit pixel grid.
pub fn random_input(shape: Shape, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels: Vec<u8> = (0..shape.elements()).map(|_| rng.random()).collect();
    let data = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    Tensor::new(shape, data).expect("finite by construction")
}

/// The 8-bit view of a tensor on the input grid.
pub fn quantize_input(t: &Tensor) -> Result<QTensor, QuantError> {
    let values = t
        .data()
        .iter()
        .map(|&v| round_half_away(v as f64 * 255.0).clamp(0.0, 255.0) as i32)
        .collect();
    QTensor::new(t.shape(), values, INPUT_SCALE, Signedness::Unsigned8)
}
