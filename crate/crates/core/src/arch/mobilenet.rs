use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{mnv2_name, ArchError, LayerSpec, NetworkSpec, Shape};

pub const EXPANSION_FACTORS: [usize; 5] = [6, 8, 10, 12, 14];
pub const REPETITIONS: [usize; 3] = [2, 3, 4];

/// Point in the `(t, n)` search space: expansion factor and repetition count
/// of the two intermediate inverted-residual blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MobileNetV2Config {
    pub t: usize,
    pub n: usize,
}

impl MobileNetV2Config {
    pub fn new(t: usize, n: usize) -> Result<Self, ArchError> {
        let grid = EXPANSION_FACTORS.contains(&t) && REPETITIONS.contains(&n);
        if grid || (t, n) == (2, 2) {
            Ok(Self { t, n })
        } else {
            Err(ArchError::UnsupportedVariant { t, n })
        }
    }

    /// The 16 variants in ascending `(t, n)` order.
    pub fn all() -> Vec<Self> {
        let mut v = Vec::with_capacity(16);
        v.push(Self { t: 2, n: 2 });
        for t in EXPANSION_FACTORS {
            for n in REPETITIONS {
                v.push(Self { t, n });
            }
        }
        v
    }
}

/// Frozen channel and stride layout shared by every variant. Blocks 1 and 4
/// run once with `fixed_expansion`; blocks 2 and 3 repeat `n` times with
/// expansion `t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobileNetLayout {
    pub stem_channels: usize,
    pub stem_kernel: usize,
    pub stem_stride: usize,
    pub block_channels: [usize; 4],
    pub block_strides: [usize; 4],
    pub fixed_expansion: usize,
    pub outputs: usize,
}

impl Default for MobileNetLayout {
    fn default() -> Self {
        Self {
            stem_channels: 16,
            stem_kernel: 3,
            stem_stride: 2,
            block_channels: [24, 24, 32, 320],
            block_strides: [1, 2, 2, 2],
            fixed_expansion: 6,
            outputs: 4,
        }
    }
}

pub fn build_mobilenet_v2(cfg: MobileNetV2Config) -> Result<NetworkSpec, ArchError> {
    build_mobilenet_v2_with(cfg, &MobileNetLayout::default())
}

/// Stem convolution, four inverted-residual blocks, global average pooling
/// and a fully-connected head.
pub fn build_mobilenet_v2_with(
    cfg: MobileNetV2Config,
    layout: &MobileNetLayout,
) -> Result<NetworkSpec, ArchError> {
    let cfg = MobileNetV2Config::new(cfg.t, cfg.n)?;
    let input = super::frontnet::FRONTNET_INPUT;
    let mut b = Builder {
        layers: Vec::new(),
        shape: input,
    };

    let k = layout.stem_kernel;
    b.push(LayerSpec::conv(
        "stem.conv",
        k,
        layout.stem_stride,
        k / 2,
        input.channels,
        layout.stem_channels,
    ))?;
    b.push(LayerSpec::batch_norm("stem.bn", layout.stem_channels))?;
    b.push(LayerSpec::relu("stem.relu", layout.stem_channels))?;

    let plan = [
        (layout.fixed_expansion, 1),
        (cfg.t, cfg.n),
        (cfg.t, cfg.n),
        (layout.fixed_expansion, 1),
    ];
    for (block, &(t, n)) in plan.iter().enumerate() {
        let cout = layout.block_channels[block];
        for rep in 0..n {
            let stride = if rep == 0 {
                layout.block_strides[block]
            } else {
                1
            };
            b.inverted_residual(&format!("ir{}.{}", block + 1, rep), cout, t, stride)?;
        }
    }

    let c = b.shape.channels;
    b.push(LayerSpec::avg_pool(
        "pool",
        (b.shape.height, b.shape.width),
        c,
    ))?;
    b.push(LayerSpec::fully_connected("fc", c, layout.outputs))?;
    Ok(NetworkSpec::new(mnv2_name(cfg), input, b.layers))
}

/// Builds all 16 variants with their static profiles, ordered by `(t, n)`.
pub fn enumerate_variants() -> Vec<(MobileNetV2Config, super::StaticProfile)> {
    MobileNetV2Config::all()
        .into_iter()
        .map(|cfg| {
            let net = build_mobilenet_v2(cfg).expect("enumerated variants are valid");
            let profile = super::profile(&net).expect("builder output propagates");
            (cfg, profile)
        })
        .collect()
}

struct Builder {
    layers: Vec<LayerSpec>,
    shape: Shape,
}

impl Builder {
    fn push(&mut self, layer: LayerSpec) -> Result<(), ArchError> {
        self.shape = layer.output_shape(self.shape)?;
        self.layers.push(layer);
        Ok(())
    }

    fn inverted_residual(
        &mut self,
        prefix: &str,
        cout: usize,
        t: usize,
        stride: usize,
    ) -> Result<(), ArchError> {
        let source = self.layers.len();
        let cin = self.shape.channels;
        let hidden = cin * t;
        if t != 1 {
            self.push(LayerSpec::conv(
                &format!("{prefix}.expand"),
                1,
                1,
                0,
                cin,
                hidden,
            ))?;
            self.push(LayerSpec::batch_norm(
                &format!("{prefix}.expand_bn"),
                hidden,
            ))?;
            self.push(LayerSpec::relu(&format!("{prefix}.expand_relu"), hidden))?;
        }
        self.push(LayerSpec::depthwise(
            &format!("{prefix}.dw"),
            3,
            stride,
            1,
            hidden,
        ))?;
        self.push(LayerSpec::batch_norm(&format!("{prefix}.dw_bn"), hidden))?;
        self.push(LayerSpec::relu(&format!("{prefix}.dw_relu"), hidden))?;
        self.push(LayerSpec::conv(
            &format!("{prefix}.project"),
            1,
            1,
            0,
            hidden,
            cout,
        ))?;
        self.push(LayerSpec::batch_norm(&format!("{prefix}.project_bn"), cout))?;
        if stride == 1 && cin == cout {
            self.push(LayerSpec::add(&format!("{prefix}.add"), cout, source))?;
        }
        Ok(())
    }
}
