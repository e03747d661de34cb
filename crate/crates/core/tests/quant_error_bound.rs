use std::f64::consts::PI;

use nanoloc_core::arch::{build_frontnet, LayerKind, LayerSpec, NetworkSpec, Shape};
use nanoloc_core::geometry::WorldPose;
use nanoloc_core::quant::{
    crop_pixels, fake_quantize, random_input, FloatNetwork, OutputQuant, Signedness, Tensor,
    CROP_HEIGHT, FRAME_SIZE,
};
use nanoloc_core::vision::{render, Background, CameraIntrinsics, TargetModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn conv_net() -> NetworkSpec {
    NetworkSpec::new(
        "probe",
        Shape::new(2, 12, 12),
        vec![
            LayerSpec::conv("c1", 3, 1, 1, 2, 6),
            LayerSpec::relu("r1", 6),
            LayerSpec::conv("c2", 3, 2, 1, 6, 8),
            LayerSpec::batch_norm("bn2", 8),
            LayerSpec::relu("r2", 8),
            LayerSpec::conv("c3", 1, 1, 0, 8, 8),
            LayerSpec::fully_connected("fc", 8 * 6 * 6, 4),
        ],
    )
}

/// Direct convolution of one op's grid weights on its grid input.
fn reference_conv(
    layer: &LayerSpec,
    input: &[f64],
    in_hw: (usize, usize),
    w: &[f64],
    b: &[f64],
) -> Vec<f64> {
    let (kh, kw) = layer.kernel;
    let (sh, sw) = layer.stride;
    let (ph, pw) = layer.padding;
    let (h, wd) = in_hw;
    let oh = (h + 2 * ph - kh) / sh + 1;
    let ow = (wd + 2 * pw - kw) / sw + 1;
    let mut out = vec![0.0; layer.out_channels * oh * ow];
    for o in 0..layer.out_channels {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = b[o];
                for i in 0..layer.in_channels {
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let (iy, ix) = (
                                (y * sh + dy) as isize - ph as isize,
                                (x * sw + dx) as isize - pw as isize,
                            );
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                continue;
                            }
                            acc += w[((o * layer.in_channels + i) * kh + dy) * kw + dx]
                                * input[(i * h + iy as usize) * wd + ix as usize];
                        }
                    }
                }
                out[(o * oh + y) * ow + x] = acc;
            }
        }
    }
    out
}

#[test]
fn per_layer_error_within_one_grid_step() {
    let spec = conv_net();
    let shapes = spec.shapes().unwrap();
    let mut checked = 0;
    for seed in 0..20u64 {
        let float = FloatNetwork::random(spec.clone(), seed).unwrap();
        let calib: Vec<Tensor> = (0..8)
            .map(|i| random_input(spec.input, seed * 100 + i))
            .collect();
        let Ok(fq) = fake_quantize(&float, &calib) else {
            continue;
        };
        for k in 0..4 {
            let x = random_input(spec.input, seed * 1000 + k);
            let trace = fq.trace(&x).unwrap();
            for (j, op) in fq.ops().iter().enumerate() {
                let li = spec.layers.iter().position(|l| l.name == op.name).unwrap();
                let layer = &spec.layers[li];
                let OutputQuant::Activation(aq) = fq.boundary_quant(j + 1) else {
                    continue;
                };
                if layer.kind != LayerKind::Conv2D {
                    continue;
                }
                let s = shapes[li];
                let z =
                    reference_conv(layer, &trace[j], (s.height, s.width), &op.weights, &op.bias);
                let (lo, hi) = aq.bounds();
                for (u, v) in trace[j + 1].iter().zip(&z) {
                    let v = if aq.signedness == Signedness::Unsigned8 {
                        v.max(0.0)
                    } else {
                        *v
                    };
                    let r = v.clamp(lo * aq.scale, hi * aq.scale);
                    assert!(
                        (u - r).abs() <= aq.scale * (1.0 + 1e-9),
                        "op {}: {u} vs {r}",
                        op.name
                    );
                }
                checked += 1;
            }
        }
    }
    assert!(checked >= 100, "{checked}");
}

fn synthetic_frames(n: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cam, model) = (CameraIntrinsics::default(), TargetModel::default());
    (0..n)
        .map(|_| {
            let x = rng.random_range(0.4..1.6);
            let tgt = WorldPose::new(
                x,
                rng.random_range(-0.6..0.6) * x,
                rng.random_range(-0.3..0.3) * x,
                PI,
            );
            let frame = render(
                &WorldPose::default(),
                &tgt,
                &cam,
                &model,
                Background::Textured { seed: rng.random() },
            );
            Tensor::from_gray(
                CROP_HEIGHT,
                FRAME_SIZE,
                &crop_pixels(frame.pixels()).unwrap(),
            )
            .unwrap()
        })
        .collect()
}

#[test]
fn frontnet_golden_and_deviation_guard() {
    let float = FloatNetwork::random(build_frontnet(), 2024).unwrap();
    let frames = synthetic_frames(32, 9);
    let out = float.infer(&frames[0]).unwrap().to_array();
    let golden = [
        1.2122994661331177,
        -0.3607783317565918,
        -2.238722085952759,
        -0.7844155430793762,
    ];
    for (o, g) in out.iter().zip(golden) {
        assert!((o - g).abs() < 1e-6, "{out:?}");
    }
    let fq = fake_quantize(&float, &frames).unwrap();
    let mut worst: f64 = 0.0;
    for f in &frames {
        let a = float.trace(f).unwrap();
        let b = fq.trace(f).unwrap();
        let (fa, fb) = (a.last().unwrap().data(), b.last().unwrap());
        for (u, v) in fa.iter().zip(fb) {
            worst = worst.max((*u as f64 - v).abs());
        }
    }
    // measured 0.1253 when frozen
    assert!(worst < 0.15, "max output deviation {worst}");
}
