//! Synthetic labelled datasets: PGM frames plus a CSV manifest with the
//! observer, target and relative pose of every frame.

use std::fs;
use std::path::{Path, PathBuf};

use nanoloc_core::geometry::{body_to_world, relative_pose, wrap_angle, Pose, WorldPose};
use nanoloc_core::vision::{augment, render, Background, Frame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::pgm;

pub const MANIFEST_NAME: &str = "manifest.csv";
pub const FRAME_DIR: &str = "frames";

pub const HEADER: [&str; 13] = [
    "frame", "obs_x", "obs_y", "obs_z", "obs_yaw", "tgt_x", "tgt_y", "tgt_z", "tgt_yaw", "rel_x",
    "rel_y", "rel_z", "rel_phi",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Frame path as written in the manifest, relative to its directory.
    pub frame: PathBuf,
    pub observer: WorldPose,
    pub target: WorldPose,
    pub relative: Pose,
}

/// Draws an observer pose and a target in its field of view.
pub fn sample_poses(cfg: &RunConfig, rng: &mut impl Rng) -> (WorldPose, WorldPose) {
    let d = &cfg.dataset;
    let observer = WorldPose::new(
        rng.random_range(-0.5..=0.5),
        rng.random_range(-0.5..=0.5),
        rng.random_range(-0.3..=0.3),
        wrap_angle(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)),
    );
    let x = rng.random_range(d.distance.0..=d.distance.1);
    let rel = [
        x,
        x * rng.random_range(-d.lateral_fraction..=d.lateral_fraction),
        x * rng.random_range(-d.vertical_fraction..=d.vertical_fraction),
    ];
    let heading = rng.random_range(-d.max_heading..=d.max_heading);
    let w = body_to_world(rel, observer.yaw);
    let target = WorldPose::new(
        observer.x + w[0],
        observer.y + w[1],
        observer.z + w[2],
        wrap_angle(observer.yaw + heading),
    );
    (observer, target)
}

fn frame_name(i: usize) -> PathBuf {
    Path::new(FRAME_DIR).join(format!("{i:05}.pgm"))
}

/// Renders `cfg.dataset.count` frames into `dir` and writes the manifest.
pub fn generate(cfg: &RunConfig, seed: u64, dir: &Path) -> Result<Vec<Sample>> {
    fs::create_dir_all(dir.join(FRAME_DIR)).map_err(Error::io(dir))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(cfg.dataset.count);
    for i in 0..cfg.dataset.count {
        let (observer, target) = sample_poses(cfg, &mut rng);
        let background = if cfg.dataset.textured {
            Background::Textured { seed: rng.random() }
        } else {
            Background::Flat
        };
        let mut frame: Frame = render(&observer, &target, &cfg.camera, &cfg.target, background);
        if cfg.dataset.augment {
            frame = augment(&frame, &cfg.augment, &mut rng);
        }
        let name = frame_name(i);
        pgm::write(&dir.join(&name), &frame)?;
        let mut relative = relative_pose(&observer, &target);
        relative.phi = wrap_angle(relative.phi);
        samples.push(Sample {
            frame: name,
            observer,
            target,
            relative,
        });
    }
    write_manifest(&dir.join(MANIFEST_NAME), &samples)?;
    Ok(samples)
}

pub fn write_manifest(path: &Path, samples: &[Sample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).unwrap();
    for s in samples {
        let (o, t, r) = (s.observer, s.target, s.relative);
        let mut row = vec![s.frame.to_string_lossy().replace('\\', "/")];
        row.extend(
            [
                o.x, o.y, o.z, o.yaw, t.x, t.y, t.z, t.yaw, r.x, r.y, r.z, r.phi,
            ]
            .map(|v| v.to_string()),
        );
        w.write_record(&row).unwrap();
    }
    fs::write(path, w.into_inner().expect("in-memory writer")).map_err(Error::io(path))
}

pub fn read_manifest(path: &Path) -> Result<Vec<Sample>> {
    let text = fs::read(path).map_err(Error::io(path))?;
    let err = |line: u64, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        reason,
    };
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_slice());
    let header = r.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if header.iter().ne(HEADER) {
        return Err(err(1, format!("expected header `{}`", HEADER.join(","))));
    }
    let mut samples = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != HEADER.len() {
            return Err(err(
                line,
                format!("expected {} fields, found {}", HEADER.len(), rec.len()),
            ));
        }
        let mut v = [0.0f64; 12];
        for (k, slot) in v.iter_mut().enumerate() {
            let field = &rec[k + 1];
            *slot = field
                .trim()
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| {
                    err(
                        line,
                        format!(
                            "column `{}`: `{field}` is not a finite number",
                            HEADER[k + 1]
                        ),
                    )
                })?;
        }
        if rec[0].is_empty() {
            return Err(err(line, "empty frame path".into()));
        }
        samples.push(Sample {
            frame: PathBuf::from(&rec[0]),
            observer: WorldPose::new(v[0], v[1], v[2], v[3]),
            target: WorldPose::new(v[4], v[5], v[6], v[7]),
            relative: Pose::new(v[8], v[9], v[10], v[11]),
        });
    }
    if samples.is_empty() {
        return Err(err(1, "manifest has no samples".into()));
    }
    Ok(samples)
}
