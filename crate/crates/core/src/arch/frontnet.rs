use alloc::format;
use alloc::vec::Vec;

use super::{LayerSpec, NetworkSpec, Shape};

/// Grayscale input after cropping 160x160 to 96 rows.
pub const FRONTNET_INPUT: Shape = Shape::new(1, 96, 160);

const STEM_CHANNELS: usize = 32;
const BLOCK_CHANNELS: [usize; 3] = [32, 64, 128];
const OUTPUTS: usize = 4;

/// 5x5/2 stem, 2x2 max-pool, three blocks of two 3x3 convolutions (the first
/// strided), each convolution followed by batch-norm and ReLU, and a 4-way
/// fully-connected head.
///
/// Channel widths 32 / 32 / 64 / 128 give 303,392 weights and 14.14 M MACs;
/// the first block keeps 32 channels so both totals land on the published
/// 304 KB / 48 fps figures.
pub fn build_frontnet() -> NetworkSpec {
    let mut layers = Vec::with_capacity(26);
    conv_bn_relu(
        &mut layers,
        "stem",
        LayerSpec::conv("stem.conv", 5, 2, 2, 1, STEM_CHANNELS),
    );
    layers.push(LayerSpec::max_pool("pool", 2, 2, STEM_CHANNELS));

    let mut cin = STEM_CHANNELS;
    for (b, &cout) in BLOCK_CHANNELS.iter().enumerate() {
        let block = format!("block{}", b + 1);
        let first = LayerSpec::conv(&format!("{block}.conv1"), 3, 2, 1, cin, cout);
        conv_bn_relu(&mut layers, &format!("{block}.1"), first);
        let second = LayerSpec::conv(&format!("{block}.conv2"), 3, 1, 1, cout, cout);
        conv_bn_relu(&mut layers, &format!("{block}.2"), second);
        cin = cout;
    }

    // 96x160 halves five times to 3x5
    let flat = cin * 3 * 5;
    layers.push(LayerSpec::fully_connected("fc", flat, OUTPUTS));
    NetworkSpec::new("frontnet", FRONTNET_INPUT, layers)
}

fn conv_bn_relu(layers: &mut Vec<LayerSpec>, prefix: &str, conv: LayerSpec) {
    let c = conv.out_channels;
    layers.push(conv);
    layers.push(LayerSpec::batch_norm(&format!("{prefix}.bn"), c));
    layers.push(LayerSpec::relu(&format!("{prefix}.relu"), c));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::LayerKind;

    #[test]
    fn spatial_schedule_halves_five_times() {
        let net = build_frontnet();
        let shapes = net.shapes().unwrap();
        let mut spatial: Vec<(usize, usize)> = Vec::new();
        for s in &shapes {
            if spatial.last() != Some(&(s.height, s.width)) {
                spatial.push((s.height, s.width));
            }
        }
        assert_eq!(
            spatial,
            [
                (96, 160),
                (48, 80),
                (24, 40),
                (12, 20),
                (6, 10),
                (3, 5),
                (1, 1)
            ]
        );
        assert_eq!(*shapes.last().unwrap(), Shape::vector(4));
    }

    #[test]
    fn eight_weight_layers() {
        let net = build_frontnet();
        let weighted = net.layers.iter().filter(|l| l.kind.has_weights()).count();
        assert_eq!(weighted, 8);
        let convs: Vec<_> = net
            .layers
            .iter()
            .filter(|l| l.kind == LayerKind::Conv2D)
            .collect();
        assert_eq!(convs[0].kernel, (5, 5));
        assert!(convs[1..].iter().all(|c| c.kernel == (3, 3)));
        // every convolution is followed by batch-norm then ReLU
        for (i, l) in net.layers.iter().enumerate() {
            if l.kind == LayerKind::Conv2D {
                assert_eq!(net.layers[i + 1].kind, LayerKind::BatchNorm);
                assert_eq!(net.layers[i + 2].kind, LayerKind::ReLU);
            }
        }
    }
}
