use nanoloc_core::arch::{all_networks, profile, LayerSpec, NetworkSpec, Shape};
use nanoloc_core::planner::{
    estimate_throughput, operative_point, plan_tiling, validate_plan, CycleModel, MemoryConfig,
    OperativePointName, PlanError,
};
use proptest::prelude::*;

#[test]
fn every_network_plans_and_validates() {
    let mem = MemoryConfig::default();
    for net in all_networks() {
        let plan = plan_tiling(&net, &mem).unwrap();
        let report = validate_plan(&plan, &net, &mem);
        assert!(
            report.is_valid(),
            "{}: {:?}",
            net.name,
            report.failures().collect::<Vec<_>>()
        );
        assert!(plan.total_weight_bytes <= mem.l2_bytes, "{}", net.name);
        assert_eq!(plan.total_weight_bytes, profile(&net).unwrap().weight_bytes);
    }
}

#[test]
fn stem_needs_several_tiles() {
    let net = NetworkSpec::new(
        "stem",
        Shape::new(1, 160, 160),
        vec![LayerSpec::conv("stem", 5, 2, 2, 1, 32)],
    );
    let mem = MemoryConfig::default();
    let plan = plan_tiling(&net, &mem).unwrap();
    let l = &plan.layers[0];
    assert!(l.tiles.len() > 1);
    assert!(l.footprint_bytes / 2 <= 32 * 1024);
    assert!(validate_plan(&plan, &net, &mem).is_valid());
}

#[test]
fn table1_points() {
    let p = profile(&nanoloc_core::arch::build_frontnet()).unwrap();
    let m = CycleModel::fitted();
    let fps = |n| {
        let op = operative_point(n);
        estimate_throughput(&p, op.fc_mhz, op.cl_mhz, &m).frame_rate_fps
    };
    let (lo, mid, hi) = (
        fps(OperativePointName::MinPower),
        fps(OperativePointName::MostEfficient),
        fps(OperativePointName::MaxPerformance),
    );
    assert!((hi - 48.3).abs() / 48.3 < 1e-3);
    assert!((lo - 6.8).abs() / 6.8 <= 0.15);
    assert!((mid - 19.7).abs() / 19.7 <= 0.15);
    assert!(((mid / lo) - 19.7 / 6.8).abs() / (19.7 / 6.8) <= 0.10);
}

fn layer_strategy() -> impl Strategy<Value = (NetworkSpec, u64)> {
    (
        1usize..=48,
        1usize..=64,
        4usize..=48,
        4usize..=64,
        prop_oneof![Just(1usize), Just(3), Just(5)],
        1usize..=2,
        0usize..=3,
        2_048u64..=65_536,
    )
        .prop_map(|(cin, cout, h, w, k, s, kind, l1)| {
            let layer = match kind {
                0 => LayerSpec::conv("l", k, s, k / 2, cin, cout),
                1 => LayerSpec::depthwise("l", k, s, k / 2, cin),
                2 => LayerSpec::max_pool("l", 2, 2, cin),
                _ => LayerSpec::fully_connected("l", cin * h * w, cout),
            };
            (
                NetworkSpec::new("p", Shape::new(cin, h, w), vec![layer]),
                l1,
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_layers_plan_validly((net, l1) in layer_strategy()) {
        let mem = MemoryConfig { l1_bytes: l1, ..MemoryConfig::default() };
        match plan_tiling(&net, &mem) {
            Ok(plan) => {
                let report = validate_plan(&plan, &net, &mem);
                prop_assert!(report.is_valid(), "{:?}", report.failures().collect::<Vec<_>>());
                // shrinking L1 never grows the tile
                let smaller = MemoryConfig { l1_bytes: l1 * 3 / 4, ..mem };
                if let Ok(p2) = plan_tiling(&net, &smaller) {
                    prop_assert!(p2.layers[0].tile.bytes() <= plan.layers[0].tile.bytes());
                    prop_assert!(validate_plan(&p2, &net, &smaller).is_valid());
                }
            }
            Err(PlanError::Unplannable { minimal_bytes, .. }) => prop_assert!(minimal_bytes > l1),
            Err(e) => prop_assert!(false, "{e}"),
        }
    }
}
