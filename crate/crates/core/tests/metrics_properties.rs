use std::f64::consts::PI;

use nanoloc_core::geometry::{Pose, WorldPose};
use nanoloc_core::metrics::{evaluate, mae, r2, rmse, Variable};
use nanoloc_core::sim::{
    gen_spiral, run_episode, BlobPinhole, OracleNoise, Perceiver, PerceptionModel, SimConfig,
    SpiralParams,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn poses(seed: u64, n: usize) -> Vec<Pose> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            Pose::new(
                rng.random_range(0.3..2.0),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.4..0.4),
                rng.random_range(-PI..PI),
            )
        })
        .collect()
}

#[test]
fn oracle_and_mean_predictors() {
    let truth = poses(1, 200);
    let (rep, scatter) = evaluate(truth.iter().map(|t| (*t, *t)), |p| Ok::<_, String>(*p));
    assert!(rep
        .all
        .variables
        .iter()
        .all(|m| m.r2 == Some(1.0) && m.rmse == 0.0));
    assert_eq!(scatter.len(), 800);
    assert_eq!(rep.near.samples + rep.far.samples, 200);

    // the mean predictor on a series whose mean is exactly representable
    let t: Vec<f64> = (0..64).map(|i| i as f64 * 0.25).collect();
    let mean = t.iter().sum::<f64>() / t.len() as f64;
    assert_eq!(r2(&vec![mean; t.len()], &t).unwrap(), 0.0);
}

#[test]
fn failures_are_counted_and_excluded() {
    let truth = poses(2, 50);
    let (rep, _) = evaluate(truth.iter().enumerate().map(|(i, t)| (i, *t)), |i| {
        if i % 5 == 0 {
            Err(format!("sample {i} unreadable"))
        } else {
            Ok(truth[*i])
        }
    });
    assert_eq!(rep.failures.len(), 10);
    assert_eq!(rep.all.samples, 40);
    assert_eq!(rep.samples, 50);
}

#[test]
fn rmse_dominates_mae_on_random_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let n = rng.random_range(1..64);
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let p: Vec<f64> = (0..n)
            .map(|_| rng.random_range(-1.0..1.0) * scale)
            .collect();
        let t: Vec<f64> = (0..n)
            .map(|_| rng.random_range(-1.0..1.0) * scale)
            .collect();
        assert!(rmse(&p, &t).unwrap() >= mae(&p, &t).unwrap());
    }
}

#[test]
fn blob_predictor_struggles_most_with_distance() {
    // frames as recorded by an observer following the spiral
    let traj = gen_spiral(SpiralParams::default(), 60.0);
    let log = run_episode(
        &traj,
        &PerceptionModel::Oracle(OracleNoise::default()),
        &SimConfig::default(),
        0,
    )
    .unwrap();
    let stride = log.rows.len() / 500;
    let samples: Vec<((WorldPose, WorldPose), Pose)> = (0..500)
        .map(|i| {
            let row = &log.rows[i * stride];
            ((row.observer.pose(), row.target), row.relative)
        })
        .collect();
    let model = PerceptionModel::BlobPinhole(BlobPinhole {
        detector: nanoloc_core::vision::BlobDetector::adaptive(),
        background: nanoloc_core::vision::Background::Textured { seed: 11 },
        ..BlobPinhole::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut perceiver = Perceiver::new(&model, 0, 1.0, &mut rng);
    let (rep, _) = evaluate(samples, |(obs, tgt)| {
        perceiver.perceive(obs, tgt).ok_or("no detection")
    });
    let r = |v: Variable| rep.all.variables[v as usize].r2.unwrap();
    println!(
        "blob r2 x {:.3} y {:.3} z {:.3}, failures {}",
        r(Variable::X),
        r(Variable::Y),
        r(Variable::Z),
        rep.failures.len()
    );
    assert!(r(Variable::X) < r(Variable::Y) && r(Variable::X) < r(Variable::Z));
}

proptest! {
    #[test]
    fn r2_shift_invariant(
        data in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..50),
        c in -100.0f64..100.0,
    ) {
        let (p, t): (Vec<f64>, Vec<f64>) = data.into_iter().unzip();
        prop_assume!(t.iter().any(|v| (v - t[0]).abs() > 1e-3));
        let base = r2(&p, &t).unwrap();
        let ps: Vec<f64> = p.iter().map(|v| v + c).collect();
        let ts: Vec<f64> = t.iter().map(|v| v + c).collect();
        let shifted = r2(&ps, &ts).unwrap();
        prop_assert!((base - shifted).abs() <= 1e-9 * base.abs().max(1.0));
        prop_assert!(base <= 1.0);
    }
}
