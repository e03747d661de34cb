//! Layer graphs for the two CNN families and their static profiles.
//!
//! A [`NetworkSpec`] is an ordered list of layers. Tensor `0` is the network
//! input and tensor `i + 1` is the output of layer `i`; each layer consumes
//! the tensor produced by its predecessor, and `Add` layers additionally read
//! the tensor named by their `skip` index.

mod frontnet;
mod mobilenet;
mod profile;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

pub use frontnet::build_frontnet;
pub use mobilenet::{
    build_mobilenet_v2, build_mobilenet_v2_with, enumerate_variants, MobileNetLayout,
    MobileNetV2Config, EXPANSION_FACTORS, REPETITIONS,
};
pub use profile::{profile, LayerProfile, StaticProfile};

/// Bytes per kilobyte used when comparing against published footprints.
pub const KILOBYTE: f64 = 1000.0;

/// Bytes stored per output channel for each per-channel constant (bias or
/// folded batch-norm multiplier).
pub const CHANNEL_CONSTANT_BYTES: u64 = 4;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArchError {
    #[error("layer `{layer}`: {reason}")]
    InvalidLayer { layer: String, reason: &'static str },
    #[error("layer `{layer}`: expected input {expected}, found {found}")]
    ShapeMismatch {
        layer: String,
        expected: Shape,
        found: Shape,
    },
    #[error("layer `{layer}`: kernel larger than padded input")]
    KernelTooLarge { layer: String },
    #[error("layer `{layer}`: residual source tensor {skip} is invalid")]
    BadSkip { layer: String, skip: usize },
    #[error("MobileNetV2 variant (t={t}, n={n}) is outside the supported set")]
    UnsupportedVariant { t: usize, n: usize },
    #[error("unknown network `{0}`")]
    UnknownNetwork(String),
    #[error("network has no layers")]
    Empty,
}

/// Channel-major tensor shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub const fn vector(len: usize) -> Self {
        Self::new(len, 1, 1)
    }

    pub const fn elements(&self) -> usize {
        self.channels * self.height * self.width
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    Conv2D,
    DepthwiseConv2D,
    MaxPool2D,
    AvgPool2D,
    FullyConnected,
    BatchNorm,
    ReLU,
    Add,
}

impl LayerKind {
    pub const ALL: [LayerKind; 8] = [
        LayerKind::Conv2D,
        LayerKind::DepthwiseConv2D,
        LayerKind::MaxPool2D,
        LayerKind::AvgPool2D,
        LayerKind::FullyConnected,
        LayerKind::BatchNorm,
        LayerKind::ReLU,
        LayerKind::Add,
    ];

    pub const fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv2D => "conv2d",
            LayerKind::DepthwiseConv2D => "dwconv2d",
            LayerKind::MaxPool2D => "maxpool2d",
            LayerKind::AvgPool2D => "avgpool2d",
            LayerKind::FullyConnected => "fc",
            LayerKind::BatchNorm => "batchnorm",
            LayerKind::ReLU => "relu",
            LayerKind::Add => "add",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Layers that carry 8-bit weights.
    pub const fn has_weights(self) -> bool {
        matches!(
            self,
            LayerKind::Conv2D | LayerKind::DepthwiseConv2D | LayerKind::FullyConnected
        )
    }

    /// Layers that are folded into their producer at deployment time and
    /// therefore never run as a separate kernel.
    pub const fn is_fused(self) -> bool {
        matches!(self, LayerKind::BatchNorm | LayerKind::ReLU)
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    /// (height, width)
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    /// For fully-connected layers this is the flattened input length.
    pub in_channels: usize,
    pub out_channels: usize,
    /// `Add` only: index of the tensor summed with the predecessor output.
    pub skip: Option<usize>,
}

impl LayerSpec {
    fn base(name: &str, kind: LayerKind, in_channels: usize, out_channels: usize) -> Self {
        Self {
            name: name.into(),
            kind,
            kernel: (1, 1),
            stride: (1, 1),
            padding: (0, 0),
            in_channels,
            out_channels,
            skip: None,
        }
    }

    /// Square-kernel convolution with symmetric stride and padding.
    pub fn conv(
        name: &str,
        kernel: usize,
        stride: usize,
        padding: usize,
        cin: usize,
        cout: usize,
    ) -> Self {
        Self {
            kernel: (kernel, kernel),
            stride: (stride, stride),
            padding: (padding, padding),
            ..Self::base(name, LayerKind::Conv2D, cin, cout)
        }
    }

    pub fn depthwise(
        name: &str,
        kernel: usize,
        stride: usize,
        padding: usize,
        channels: usize,
    ) -> Self {
        Self {
            kernel: (kernel, kernel),
            stride: (stride, stride),
            padding: (padding, padding),
            ..Self::base(name, LayerKind::DepthwiseConv2D, channels, channels)
        }
    }

    pub fn max_pool(name: &str, kernel: usize, stride: usize, channels: usize) -> Self {
        Self {
            kernel: (kernel, kernel),
            stride: (stride, stride),
            ..Self::base(name, LayerKind::MaxPool2D, channels, channels)
        }
    }

    /// Average pooling over a `(height, width)` window with stride equal to the window.
    pub fn avg_pool(name: &str, window: (usize, usize), channels: usize) -> Self {
        Self {
            kernel: window,
            stride: window,
            ..Self::base(name, LayerKind::AvgPool2D, channels, channels)
        }
    }

    pub fn fully_connected(name: &str, inputs: usize, outputs: usize) -> Self {
        Self::base(name, LayerKind::FullyConnected, inputs, outputs)
    }

    pub fn batch_norm(name: &str, channels: usize) -> Self {
        Self::base(name, LayerKind::BatchNorm, channels, channels)
    }

    pub fn relu(name: &str, channels: usize) -> Self {
        Self::base(name, LayerKind::ReLU, channels, channels)
    }

    pub fn add(name: &str, channels: usize, skip: usize) -> Self {
        Self {
            skip: Some(skip),
            ..Self::base(name, LayerKind::Add, channels, channels)
        }
    }

    /// Number of 8-bit weights (excluding per-channel constants).
    pub fn weight_count(&self) -> u64 {
        let (kh, kw) = self.kernel;
        match self.kind {
            LayerKind::Conv2D => (kh * kw * self.in_channels * self.out_channels) as u64,
            LayerKind::DepthwiseConv2D => (kh * kw * self.out_channels) as u64,
            LayerKind::FullyConnected => (self.in_channels * self.out_channels) as u64,
            _ => 0,
        }
    }

    /// Bytes of per-output-channel constants: a bias for weight layers and a
    /// folded multiplier for batch-norm.
    pub fn constant_bytes(&self) -> u64 {
        match self.kind {
            k if k.has_weights() => self.out_channels as u64 * CHANNEL_CONSTANT_BYTES,
            LayerKind::BatchNorm => self.out_channels as u64 * CHANNEL_CONSTANT_BYTES,
            _ => 0,
        }
    }

    fn check_invariants(&self) -> Result<(), ArchError> {
        let err = |reason| ArchError::InvalidLayer {
            layer: self.name.clone(),
            reason,
        };
        if self.kernel.0 == 0 || self.kernel.1 == 0 {
            return Err(err("kernel must be at least 1"));
        }
        if self.stride.0 == 0 || self.stride.1 == 0 {
            return Err(err("stride must be at least 1"));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(err("channel counts must be at least 1"));
        }
        if self.kind != LayerKind::Conv2D
            && self.kind != LayerKind::FullyConnected
            && self.in_channels != self.out_channels
        {
            return Err(err("layer must preserve its channel count"));
        }
        if self.kind == LayerKind::Add && self.skip.is_none() {
            return Err(err("add layer needs a residual source"));
        }
        if self.kind != LayerKind::Add && self.skip.is_some() {
            return Err(err("only add layers take a residual source"));
        }
        Ok(())
    }

    /// Output shape for the given input, checking channel agreement.
    pub fn output_shape(&self, input: Shape) -> Result<Shape, ArchError> {
        self.check_invariants()?;
        if self.kind == LayerKind::FullyConnected {
            if input.elements() != self.in_channels {
                return Err(ArchError::ShapeMismatch {
                    layer: self.name.clone(),
                    expected: Shape::vector(self.in_channels),
                    found: input,
                });
            }
            return Ok(Shape::vector(self.out_channels));
        }
        if input.channels != self.in_channels {
            return Err(ArchError::ShapeMismatch {
                layer: self.name.clone(),
                expected: Shape::new(self.in_channels, input.height, input.width),
                found: input,
            });
        }
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let (ph, pw) = self.padding;
        let padded_h = input.height + 2 * ph;
        let padded_w = input.width + 2 * pw;
        if padded_h < kh || padded_w < kw {
            return Err(ArchError::KernelTooLarge {
                layer: self.name.clone(),
            });
        }
        Ok(Shape::new(
            self.out_channels,
            (padded_h - kh) / sh + 1,
            (padded_w - kw) / sw + 1,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(name: impl Into<String>, input: Shape, layers: Vec<LayerSpec>) -> Self {
        Self {
            name: name.into(),
            input,
            layers,
        }
    }

    /// Propagates shapes through the graph. Returns `layers.len() + 1`
    /// tensor shapes, the first being the network input.
    pub fn shapes(&self) -> Result<Vec<Shape>, ArchError> {
        if self.layers.is_empty() {
            return Err(ArchError::Empty);
        }
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        shapes.push(self.input);
        for (i, layer) in self.layers.iter().enumerate() {
            let input = shapes[i];
            let out = layer.output_shape(input)?;
            if let Some(skip) = layer.skip {
                // tensor `i` is the predecessor output; the skip must come earlier
                if skip >= i {
                    return Err(ArchError::BadSkip {
                        layer: layer.name.clone(),
                        skip,
                    });
                }
                if shapes[skip] != input {
                    return Err(ArchError::ShapeMismatch {
                        layer: layer.name.clone(),
                        expected: input,
                        found: shapes[skip],
                    });
                }
            }
            shapes.push(out);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Shape, ArchError> {
        self.shapes().map(|s| s[s.len() - 1])
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }
}

/// All 17 profiled networks: Frontnet followed by the MobileNetV2 variants
/// in `(t, n)` order.
pub fn all_networks() -> Vec<NetworkSpec> {
    let mut nets = Vec::with_capacity(17);
    nets.push(build_frontnet());
    nets.extend(
        MobileNetV2Config::all()
            .into_iter()
            .map(|cfg| build_mobilenet_v2(cfg).expect("enumerated variants are valid")),
    );
    nets
}

/// Resolves `frontnet` or `mnv2-<t>-<n>`.
pub fn network_by_name(name: &str) -> Result<NetworkSpec, ArchError> {
    if name == "frontnet" {
        return Ok(build_frontnet());
    }
    let unknown = || ArchError::UnknownNetwork(name.into());
    let rest = name.strip_prefix("mnv2-").ok_or_else(unknown)?;
    let (t, n) = rest.split_once('-').ok_or_else(unknown)?;
    let t = t.parse().map_err(|_| unknown())?;
    let n = n.parse().map_err(|_| unknown())?;
    build_mobilenet_v2(MobileNetV2Config::new(t, n)?)
}

pub(crate) fn mnv2_name(cfg: MobileNetV2Config) -> String {
    format!("mnv2-{}-{}", cfg.t, cfg.n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn conv_output_shape() {
        let l = LayerSpec::conv("c", 5, 2, 2, 1, 32);
        assert_eq!(
            l.output_shape(Shape::new(1, 96, 160)).unwrap(),
            Shape::new(32, 48, 80)
        );
    }

    #[test]
    fn rejects_zero_stride_and_channel_mismatch() {
        let mut l = LayerSpec::conv("c", 3, 1, 1, 4, 4);
        l.stride = (0, 1);
        assert!(matches!(
            l.output_shape(Shape::new(4, 8, 8)),
            Err(ArchError::InvalidLayer { .. })
        ));
        let l = LayerSpec::conv("c", 3, 1, 1, 4, 4);
        assert!(matches!(
            l.output_shape(Shape::new(3, 8, 8)),
            Err(ArchError::ShapeMismatch { .. })
        ));
        let mut dw = LayerSpec::depthwise("d", 3, 1, 1, 4);
        dw.out_channels = 5;
        assert!(dw.output_shape(Shape::new(4, 8, 8)).is_err());
    }

    #[test]
    fn residual_shapes_must_agree() {
        let net = NetworkSpec::new(
            "r",
            Shape::new(2, 4, 4),
            vec![
                LayerSpec::conv("a", 3, 1, 1, 2, 2),
                LayerSpec::conv("b", 3, 1, 1, 2, 2),
                LayerSpec::add("add", 2, 1),
            ],
        );
        assert!(net.shapes().is_ok());
        let bad = NetworkSpec::new(
            "r",
            Shape::new(2, 4, 4),
            vec![
                LayerSpec::conv("a", 3, 2, 1, 2, 2),
                LayerSpec::conv("b", 3, 1, 1, 2, 2),
                LayerSpec::add("add", 2, 0),
            ],
        );
        assert!(matches!(bad.shapes(), Err(ArchError::ShapeMismatch { .. })));
        let forward = NetworkSpec::new(
            "r",
            Shape::new(2, 4, 4),
            vec![
                LayerSpec::conv("a", 3, 1, 1, 2, 2),
                LayerSpec::add("add", 2, 1),
            ],
        );
        assert!(matches!(forward.shapes(), Err(ArchError::BadSkip { .. })));
    }

    #[test]
    fn names_resolve() {
        assert_eq!(network_by_name("frontnet").unwrap().name, "frontnet");
        assert_eq!(network_by_name("mnv2-14-4").unwrap().name, "mnv2-14-4");
        assert!(network_by_name("mnv2-3-3").is_err());
        assert!(network_by_name("resnet").is_err());
        assert_eq!(all_networks().len(), 17);
    }
}
