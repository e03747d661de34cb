use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nanoloc::cli::{infer, read_container};
use nanoloc::config::RunConfig;
use nanoloc::{dataset, pgm, spec_text};
use nanoloc_core::arch::build_frontnet;
use nanoloc_core::planner::{plan_tiling, MemoryConfig};
use nanoloc_core::quant::{crop_pixels, fake_quantize, integerize, FloatNetwork, QTensor, Tensor};

fn nanoloc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nanoloc"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

#[test]
fn golden_frontnet_plan_and_spec() {
    let plan = plan_tiling(&build_frontnet(), &MemoryConfig::default()).unwrap();
    assert_eq!(
        nanoloc::plan_text::to_text(&plan),
        include_str!("golden/frontnet.plan")
    );
    assert_eq!(
        spec_text::to_text(&build_frontnet()),
        include_str!("golden/frontnet.spec")
    );
    assert_eq!(
        spec_text::from_text(include_str!("golden/frontnet.spec")).unwrap(),
        build_frontnet()
    );
}

#[test]
fn shipped_config_is_the_default() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    assert_eq!(RunConfig::load(&path).unwrap(), RunConfig::default());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&nanoloc(&["profile", "--bogus"], d)), 2);
    assert_eq!(code(&nanoloc(&["profile", "no-such-net"], d)), 2);
    assert_eq!(code(&nanoloc(&["frobnicate"], d)), 2);
    fs::write(d.join("bad.toml"), "[sim]\nspeed = 3\n").unwrap();
    let o = nanoloc(&["--config", "bad.toml", "profile"], d);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.toml:2"));
}

#[test]
fn help_lists_every_flag() {
    let d = tempfile::tempdir().unwrap();
    let o = nanoloc(&["simulate", "--help"], d.path());
    assert_eq!(code(&o), 0);
    let help = String::from_utf8_lossy(&o.stdout);
    for flag in [
        "--trajectory",
        "--perception",
        "--duration",
        "--noise-rmse",
        "--weights",
        "--config",
        "--seed",
    ] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
}

#[test]
fn malformed_manifest_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut text = dataset::HEADER.join(",");
    text.push_str(
        "\nframes/a.pgm,0,0,0,0,1,0,0,3,1,0,0,3\nframes/b.pgm,0,0,0,0,1,0,0,3,1,0,zero,3\n",
    );
    fs::write(d.join("m.csv"), text).unwrap();
    let o = nanoloc(
        &["evaluate", "m.csv", "--predictor", "oracle", "-o", "out"],
        d,
    );
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("m.csv:3"), "{err}");
    assert!(!d.join("out").exists());
}

#[test]
fn aborted_episode_exits_1_and_keeps_log() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // the target spiral fits, but the observer backs away from its close start
    fs::write(
        d.join("tight.toml"),
        "[sim.volume]\nmin = [-0.3, -1.0, -1.0]\nmax = [3.5, 1.0, 1.0]\n",
    )
    .unwrap();
    let o = nanoloc(
        &[
            "--config",
            "tight.toml",
            "simulate",
            "run",
            "--duration",
            "10",
        ],
        d,
    );
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("run/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["completed"], false);
    assert!(summary["abort"].is_object());
    let rows = fs::read_to_string(d.join("run/episode.csv"))
        .unwrap()
        .lines()
        .count()
        - 1;
    assert!(rows > 0 && rows < 4800);
}

#[test]
fn quantize_matches_in_process_path() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut cfg = RunConfig::default();
    cfg.dataset.count = 6;
    let samples = dataset::generate(&cfg, 4, &d.join("ds")).unwrap();
    fs::create_dir(d.join("calib")).unwrap();
    for s in &samples[..4] {
        fs::copy(
            d.join("ds").join(&s.frame),
            d.join("calib").join(s.frame.file_name().unwrap()),
        )
        .unwrap();
    }
    assert_eq!(
        code(&nanoloc(
            &["--seed", "3", "init-weights", "frontnet", "-o", "fp.nlqw"],
            d
        )),
        0
    );
    let o = nanoloc(&["quantize", "fp.nlqw", "calib", "int.nlqw"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("max_fake_quant_deviation="));
    assert!(d.join("int.nlqw.manifest").is_file());

    // same steps in process
    let float = FloatNetwork::random(build_frontnet(), 3).unwrap();
    let calib: Vec<Tensor> = samples[..4]
        .iter()
        .map(|s| {
            let f = pgm::read(&d.join("ds").join(&s.frame)).unwrap();
            Tensor::from_gray(96, 160, &crop_pixels(f.pixels()).unwrap()).unwrap()
        })
        .collect();
    let int = integerize(&fake_quantize(&float, &calib).unwrap()).unwrap();
    let frame = pgm::read(&d.join("ds").join(&samples[5].frame)).unwrap();
    let want = int
        .infer(&QTensor::from_gray(96, 160, &crop_pixels(frame.pixels()).unwrap()).unwrap())
        .unwrap();

    let loaded = read_container(&d.join("int.nlqw")).unwrap();
    assert_eq!(infer(&loaded, &frame).unwrap(), want);
    let frame_arg = d.join("ds").join(&samples[5].frame);
    let o = nanoloc(&["infer", "int.nlqw", frame_arg.to_str().unwrap()], d);
    assert_eq!(code(&o), 0);
    let got: nanoloc_core::geometry::Pose = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(got, want);
}

#[test]
fn quantize_without_calibration_dir_leaves_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(&nanoloc(&["init-weights", "frontnet", "-o", "fp.nlqw"], d)),
        0
    );
    let o = nanoloc(&["quantize", "fp.nlqw", "missing", "int.nlqw"], d);
    assert_eq!(code(&o), 2);
    assert!(!d.join("int.nlqw").exists());
    assert!(!d.join("int.nlqw.manifest").exists());
}

#[test]
fn corrupt_container_reports_offset() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(&nanoloc(&["init-weights", "frontnet", "-o", "fp.nlqw"], d)),
        0
    );
    let mut bytes = fs::read(d.join("fp.nlqw")).unwrap();
    bytes.truncate(bytes.len() / 2);
    fs::write(d.join("cut.nlqw"), bytes).unwrap();
    fs::write(
        d.join("f.pgm"),
        pgm::encode(&nanoloc_core::vision::Frame::filled(160, 160, 200)),
    )
    .unwrap();
    let o = nanoloc(&["infer", "cut.nlqw", "f.pgm"], d);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("cut.nlqw: byte ") && err.contains("truncated"),
        "{err}"
    );
}
