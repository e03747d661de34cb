use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ArchError, LayerKind, NetworkSpec, Shape};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerProfile {
    pub name: String,
    pub kind: LayerKind,
    pub out_shape: Shape,
    pub macs: u64,
    /// 8-bit weights plus 4-byte per-channel constants.
    pub weight_bytes: u64,
    /// Bytes of 8-bit activations read and written by the layer.
    pub activation_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticProfile {
    pub network: String,
    pub weight_bytes: u64,
    pub mac_count: u64,
    pub peak_activation_bytes: u64,
    pub layers: Vec<LayerProfile>,
}

impl StaticProfile {
    /// Layers that run as separate kernels (batch-norm and ReLU are folded).
    pub fn kernel_layers(&self) -> usize {
        self.layers.iter().filter(|l| !l.kind.is_fused()).count()
    }
}

/// Counts MACs, weight bytes and activation traffic per layer.
///
/// Convolutions count `output elements x kernel area x input channels`
/// (depthwise drops the input-channel factor), fully-connected layers count
/// `inputs x outputs`; pooling, batch-norm, ReLU and residual adds count zero.
pub fn profile(net: &NetworkSpec) -> Result<StaticProfile, ArchError> {
    let shapes = net.shapes()?;
    let mut layers = Vec::with_capacity(net.layers.len());
    for (i, layer) in net.layers.iter().enumerate() {
        let input = shapes[i];
        let out = shapes[i + 1];
        let (kh, kw) = layer.kernel;
        let macs = match layer.kind {
            LayerKind::Conv2D => (out.elements() * kh * kw * layer.in_channels) as u64,
            LayerKind::DepthwiseConv2D => (out.elements() * kh * kw) as u64,
            LayerKind::FullyConnected => (layer.in_channels * layer.out_channels) as u64,
            _ => 0,
        };
        let mut activation_bytes = (input.elements() + out.elements()) as u64;
        if let Some(skip) = layer.skip {
            activation_bytes += shapes[skip].elements() as u64;
        }
        layers.push(LayerProfile {
            name: layer.name.clone(),
            kind: layer.kind,
            out_shape: out,
            macs,
            weight_bytes: layer.weight_count() + layer.constant_bytes(),
            activation_bytes,
        });
    }
    Ok(StaticProfile {
        network: net.name.clone(),
        weight_bytes: layers.iter().map(|l| l.weight_bytes).sum(),
        mac_count: layers.iter().map(|l| l.macs).sum(),
        peak_activation_bytes: layers.iter().map(|l| l.activation_bytes).max().unwrap_or(0),
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{
        all_networks, build_frontnet, build_mobilenet_v2, enumerate_variants, LayerSpec,
        MobileNetV2Config, KILOBYTE,
    };
    use alloc::vec;

    #[test]
    fn single_pixel_conv() {
        let net = NetworkSpec::new(
            "unit",
            Shape::new(1, 1, 1),
            vec![LayerSpec::conv("c", 1, 1, 0, 1, 1)],
        );
        let p = profile(&net).unwrap();
        assert_eq!(p.mac_count, 1);
        assert!(p.weight_bytes >= 1);
    }

    /// Hand-computed Frontnet table: (out elements, kernel volume x in channels).
    #[test]
    fn frontnet_matches_hand_table() {
        let table: [(u64, u64); 8] = [
            (32 * 48 * 80, 25),
            (32 * 12 * 20, 9 * 32),
            (32 * 12 * 20, 9 * 32),
            (64 * 6 * 10, 9 * 32),
            (64 * 6 * 10, 9 * 64),
            (128 * 3 * 5, 9 * 64),
            (128 * 3 * 5, 9 * 128),
            (4, 1920),
        ];
        let expected: u64 = table.iter().map(|(o, k)| o * k).sum();
        assert_eq!(expected, 14_138_880);
        let p = profile(&build_frontnet()).unwrap();
        assert_eq!(p.mac_count, expected);
        let weights: u64 = 25 * 32
            + 9 * 32 * 32 * 2
            + 9 * 32 * 64
            + 9 * 64 * 64
            + 9 * 64 * 128
            + 9 * 128 * 128
            + 1920 * 4;
        assert_eq!(weights, 303_392);
        // bias + folded BN multiplier for 480 conv channels, bias for 4 outputs
        assert_eq!(p.weight_bytes, weights + 480 * 8 + 4 * 4);
        let kb = p.weight_bytes as f64 / KILOBYTE;
        assert!((kb / 304.0 - 1.0).abs() <= 0.02, "{kb}");
    }

    #[test]
    fn totals_are_sums_and_positive() {
        for net in all_networks() {
            let p = profile(&net).unwrap();
            assert_eq!(
                p.weight_bytes,
                p.layers.iter().map(|l| l.weight_bytes).sum::<u64>()
            );
            assert_eq!(p.mac_count, p.layers.iter().map(|l| l.macs).sum::<u64>());
            assert!(p.weight_bytes > 0 && p.mac_count > 0 && p.peak_activation_bytes > 0);
            assert!(p.weight_bytes <= 512 * 1024, "{} exceeds L2", p.network);
        }
    }

    #[test]
    fn variants_grow_with_n_and_exceed_frontnet() {
        let front = profile(&build_frontnet()).unwrap();
        let variants = enumerate_variants();
        assert_eq!(variants.len(), 16);
        let min = variants.iter().min_by_key(|(_, p)| p.mac_count).unwrap();
        assert_eq!(min.0, MobileNetV2Config { t: 2, n: 2 });
        for (cfg, p) in &variants {
            assert!(p.mac_count > front.mac_count, "{cfg:?}");
            if cfg.n < 4 && cfg.t != 2 {
                let next =
                    build_mobilenet_v2(MobileNetV2Config::new(cfg.t, cfg.n + 1).unwrap()).unwrap();
                let q = profile(&next).unwrap();
                assert!(q.mac_count > p.mac_count && q.weight_bytes > p.weight_bytes);
            }
        }
    }

    #[test]
    fn published_mobilenet_aggregates() {
        let front = profile(&build_frontnet()).unwrap();
        let small =
            profile(&build_mobilenet_v2(MobileNetV2Config { t: 2, n: 2 }).unwrap()).unwrap();
        let large =
            profile(&build_mobilenet_v2(MobileNetV2Config { t: 14, n: 4 }).unwrap()).unwrap();
        let within = |v: f64, target: f64, tol: f64| (v / target - 1.0).abs() <= tol;
        assert!(within(small.weight_bytes as f64 / KILOBYTE, 111.0, 0.15));
        assert!(within(large.weight_bytes as f64 / KILOBYTE, 340.0, 0.15));
        assert!(within(
            large.mac_count as f64 / front.mac_count as f64,
            10.4,
            0.15
        ));
    }
}
