//! Command-line surface. Every output is a function of the config file and
//! the seed only.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nanoloc_core::arch::{all_networks, network_by_name, profile, NetworkSpec};
use nanoloc_core::geometry::Pose;
use nanoloc_core::metrics::{compensated_sum, evaluate};
use nanoloc_core::planner::{operative_point, plan_tiling, validate_plan};
use nanoloc_core::quant::{
    crop_pixels, fake_quantize, integerize, FloatNetwork, IntNetwork, OutputQuant, QTensor, Tensor,
    CROP_HEIGHT, FRAME_SIZE,
};
use nanoloc_core::sim::{
    estimate_pose_from_blob, gen_facing_circles, gen_spiral, gen_vertical_circles, run_episode,
    stationary, BlobPinhole, PerceptionModel, Trajectory,
};
use nanoloc_core::vision::{detect_blob, Background, Frame};

use crate::config::{PerceptionChoice, RunConfig, TrajectoryChoice};
use crate::dataset::{self, Sample};
use crate::error::{Error, Result};
use crate::outputs::{self, EvaluationOutput, SimulationSummary};
use crate::weights::{self, Container};
use crate::{pgm, plan_text, spec_text, tables};

#[derive(Debug, Parser)]
#[command(
    name = "nanoloc",
    version,
    about = "Nano-drone relative localization toolkit"
)]
pub struct Cli {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every randomized path; overrides the config's `seed`.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Architecture overview CSV: weight bytes, MACs and estimated fps.
    Profile(ProfileArgs),
    /// Modelled versus reference throughput at the three operative points.
    Table1 {
        #[arg(long, default_value = "frontnet")]
        network: String,
        #[arg(short, long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Tiling plan of a network under the configured memory hierarchy.
    Plan {
        network: String,
        #[arg(short, long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Text form of a network spec.
    Spec {
        network: String,
        #[arg(short, long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Seeded random full-precision weights for a network.
    InitWeights {
        network: String,
        #[arg(short, long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Calibrates and converts a full-precision container to integer form.
    Quantize {
        weights_in: PathBuf,
        calibration_dir: PathBuf,
        weights_out: PathBuf,
    },
    /// Runs a weight container on one PGM frame and prints the pose as JSON.
    Infer {
        weights: PathBuf,
        frame: PathBuf,
        #[arg(short, long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Renders a labelled synthetic dataset.
    Dataset {
        out_dir: PathBuf,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Runs one closed-loop episode; exits 1 when the observer leaves the volume.
    Simulate(SimulateArgs),
    /// Scores a predictor on a dataset manifest.
    Evaluate {
        manifest: PathBuf,
        /// oracle, mean, blob or cnn:<integer weight file>
        #[arg(long)]
        predictor: String,
        #[arg(short, long, value_name = "DIR")]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// Networks to profile.
    pub networks: Vec<String>,
    /// Profile every network.
    #[arg(long, conflicts_with = "networks")]
    pub all: bool,
    #[arg(short, long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Also write one per-layer CSV per network into this directory.
    #[arg(long, value_name = "DIR")]
    pub layers_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub out_dir: PathBuf,
    #[arg(long, value_enum)]
    pub trajectory: Option<TrajectoryChoice>,
    #[arg(long, value_enum)]
    pub perception: Option<PerceptionChoice>,
    #[arg(long, value_name = "SECONDS")]
    pub duration: Option<f64>,
    /// Calibrated oracle noise with this realized RMSE, meters.
    #[arg(long, value_name = "METERS")]
    pub noise_rmse: Option<f64>,
    /// Integer weight container for the cnn perception.
    #[arg(long, value_name = "FILE")]
    pub weights: Option<PathBuf>,
}

pub const EPISODE_FILE: &str = "episode.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const REPORT_FILE: &str = "report.json";
pub const SCATTER_FILE: &str = "scatter.csv";

/// Resolved invocation context.
struct Ctx {
    cfg: RunConfig,
    seed: u64,
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.unwrap_or(cfg.seed);
    let ctx = Ctx { cfg, seed };
    match cli.command {
        Command::Profile(a) => cmd_profile(&ctx, a),
        Command::Table1 { network, out } => {
            let p = profile(&network_by_name(&network)?)?;
            emit(out.as_deref(), &tables::operative_points_csv(&p))
        }
        Command::Plan { network, out } => cmd_plan(&ctx, &network, out.as_deref()),
        Command::Spec { network, out } => emit(
            out.as_deref(),
            &spec_text::to_text(&network_by_name(&network)?),
        ),
        Command::InitWeights { network, out } => {
            check_parent(&out)?;
            let net = FloatNetwork::random(network_by_name(&network)?, ctx.seed)?;
            write_container(&out, &Container::Float(net))
        }
        Command::Quantize {
            weights_in,
            calibration_dir,
            weights_out,
        } => cmd_quantize(&weights_in, &calibration_dir, &weights_out),
        Command::Infer {
            weights,
            frame,
            out,
        } => {
            let c = read_container(&weights)?;
            let f = pgm::read(&frame)?;
            let pose = infer(&c, &f)
                .map_err(|reason| Error::Usage(format!("{}: {reason}", frame.display())))?;
            emit(out.as_deref(), &outputs::to_json(&pose))
        }
        Command::Dataset { out_dir, count } => {
            let mut cfg = ctx.cfg.clone();
            if let Some(n) = count {
                cfg.dataset.count = n;
            }
            dataset::generate(&cfg, ctx.seed, &out_dir).map(|_| ())
        }
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Evaluate {
            manifest,
            predictor,
            out_dir,
        } => cmd_evaluate(&ctx, &manifest, &predictor, &out_dir),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(Error::io(p)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(Error::io("<stdout>")),
    }
}

fn check_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(dir) if !dir.is_dir() => Err(Error::Usage(format!(
            "{}: directory does not exist",
            dir.display()
        ))),
        _ => Ok(()),
    }
}

pub fn read_container(path: &Path) -> Result<Container> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    weights::decode(&bytes).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        offset: e.offset,
        reason: e.reason,
    })
}

/// Writes the container and its `<path>.manifest` companion.
pub fn write_container(path: &Path, c: &Container) -> Result<()> {
    fs::write(path, weights::encode(c)).map_err(Error::io(path))?;
    let mut m = path.as_os_str().to_owned();
    m.push(".manifest");
    let m = PathBuf::from(m);
    fs::write(&m, weights::manifest(c)).map_err(Error::io(&m))
}

fn cmd_profile(ctx: &Ctx, a: ProfileArgs) -> Result<()> {
    let nets: Vec<NetworkSpec> = if a.all || a.networks.is_empty() {
        all_networks()
    } else {
        a.networks
            .iter()
            .map(|n| network_by_name(n))
            .collect::<Result<_, _>>()?
    };
    if let Some(dir) = &a.layers_dir {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    let point = ctx.cfg.throughput.operative_point.map(operative_point);
    let csv = tables::overview_csv(&nets, point.as_ref())?;
    if let Some(dir) = &a.layers_dir {
        for net in &nets {
            let path = dir.join(format!("{}.csv", net.name));
            fs::write(&path, tables::layer_profile_csv(&profile(net)?))
                .map_err(Error::io(&path))?;
        }
    }
    emit(a.out.as_deref(), &csv)
}

fn cmd_plan(ctx: &Ctx, name: &str, out: Option<&Path>) -> Result<()> {
    let net = network_by_name(name)?;
    let plan = plan_tiling(&net, &ctx.cfg.memory)?;
    let report = validate_plan(&plan, &net, &ctx.cfg.memory);
    if let Some(c) = report.failures().next() {
        return Err(Error::Aborted(format!(
            "plan for {name} failed validation: {c:?}"
        )));
    }
    emit(out, &plan_text::to_text(&plan))
}

/// Network input tensor for a gray frame: full camera frames are cropped to
/// the network's rows, frames already of the input size pass through.
fn frame_pixels(spec: &NetworkSpec, f: &Frame) -> std::result::Result<Vec<u8>, String> {
    let i = spec.input;
    if i.channels != 1 {
        return Err(format!(
            "network expects {} channels, frames are gray",
            i.channels
        ));
    }
    if (f.height(), f.width()) == (i.height, i.width) {
        return Ok(f.pixels().to_vec());
    }
    if (f.height(), f.width()) == (FRAME_SIZE, FRAME_SIZE)
        && (i.height, i.width) == (CROP_HEIGHT, FRAME_SIZE)
    {
        return crop_pixels(f.pixels()).map_err(|e| e.to_string());
    }
    Err(format!(
        "frame is {}x{}, network input is {}x{}",
        f.width(),
        f.height(),
        i.width,
        i.height
    ))
}

pub fn infer(c: &Container, f: &Frame) -> std::result::Result<Pose, String> {
    let spec = c.spec();
    let px = frame_pixels(spec, f)?;
    let (h, w) = (spec.input.height, spec.input.width);
    match c {
        Container::Float(n) => Tensor::from_gray(h, w, &px)
            .and_then(|t| n.infer(&t))
            .map_err(|e| e.to_string()),
        Container::Integer(n) => QTensor::from_gray(h, w, &px)
            .and_then(|t| n.infer(&t))
            .map_err(|e| e.to_string()),
    }
}

fn calibration_frames(dir: &Path) -> Result<Vec<(PathBuf, Frame)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(Error::io(dir))?
        .map(|e| e.map(|e| e.path()).map_err(Error::io(dir)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Usage(format!(
            "{}: no .pgm calibration frames",
            dir.display()
        )));
    }
    paths
        .into_iter()
        .map(|p| pgm::read(&p).map(|f| (p, f)))
        .collect()
}

fn cmd_quantize(input: &Path, calib_dir: &Path, out: &Path) -> Result<()> {
    if !input.is_file() {
        return Err(Error::Usage(format!(
            "{}: weight file does not exist",
            input.display()
        )));
    }
    if !calib_dir.is_dir() {
        return Err(Error::Usage(format!(
            "{}: calibration directory does not exist",
            calib_dir.display()
        )));
    }
    check_parent(out)?;
    let float = match read_container(input)? {
        Container::Float(n) => n,
        Container::Integer(_) => {
            return Err(Error::Usage(format!(
                "{}: already integer-deployable",
                input.display()
            )));
        }
    };
    let spec = float.spec().clone();
    let calib: Vec<Tensor> = calibration_frames(calib_dir)?
        .iter()
        .map(|(p, f)| {
            frame_pixels(&spec, f)
                .map_err(|r| Error::Usage(format!("{}: {r}", p.display())))
                .and_then(|px| Ok(Tensor::from_gray(spec.input.height, spec.input.width, &px)?))
        })
        .collect::<Result<_>>()?;
    let fq = fake_quantize(&float, &calib)?;
    let int = integerize(&fq)?;

    let mut deviation = 0.0f64;
    for t in &calib {
        let (a, b) = (float.infer(t)?.to_array(), fq.infer(t)?.to_array());
        deviation = a
            .iter()
            .zip(&b)
            .map(|(u, v)| (u - v).abs())
            .fold(deviation, f64::max);
    }
    let mut report = String::new();
    for op in fq.ops() {
        let out_scale = match &op.params.output {
            OutputQuant::Activation(a) => format!("{:e}", a.scale),
            OutputQuant::Accumulator { scales } => format!("per-channel[{}]", scales.len()),
        };
        let w = &op.params.weight_scales;
        let weights = match (
            w.iter().copied().reduce(f64::min),
            w.iter().copied().reduce(f64::max),
        ) {
            (Some(lo), Some(hi)) => format!(" weight_scale=[{lo:e},{hi:e}]"),
            _ => String::new(),
        };
        report.push_str(&format!(
            "layer {} output_scale={out_scale}{weights}\n",
            op.name
        ));
    }
    report.push_str(&format!(
        "calibration_frames={} max_fake_quant_deviation={deviation:e}\n",
        calib.len()
    ));
    write_container(out, &Container::Integer(int))?;
    emit(None, &report)
}

fn build_trajectory(cfg: &RunConfig) -> Trajectory {
    let s = &cfg.sim;
    match s.trajectory {
        TrajectoryChoice::Spiral => gen_spiral(s.spiral, s.duration),
        TrajectoryChoice::Static => stationary(s.static_target, s.duration),
        TrajectoryChoice::FacingCircles => gen_facing_circles(s.facing_circles, s.duration).1,
        TrajectoryChoice::VerticalCircles => gen_vertical_circles(s.vertical_circles, s.duration).1,
    }
}

fn blob_pinhole(cfg: &RunConfig) -> BlobPinhole {
    let b = &cfg.sim.blob;
    BlobPinhole {
        camera: cfg.camera,
        target: cfg.target,
        detector: b.detector,
        background: b
            .texture_seed
            .map_or(Background::Flat, |seed| Background::Textured { seed }),
        sigma: b.sigma,
    }
}

fn integer_network(path: &Path) -> Result<IntNetwork> {
    match read_container(path)? {
        Container::Integer(n) => Ok(n),
        Container::Float(_) => Err(Error::Usage(format!(
            "{}: expected an integer-deployable container",
            path.display()
        ))),
    }
}

fn cmd_simulate(ctx: &Ctx, a: SimulateArgs) -> Result<()> {
    let mut cfg = ctx.cfg.clone();
    let s = &mut cfg.sim;
    s.trajectory = a.trajectory.unwrap_or(s.trajectory);
    s.perception = a.perception.unwrap_or(s.perception);
    s.duration = a.duration.unwrap_or(s.duration);
    s.noise_rmse = a.noise_rmse.or(s.noise_rmse);
    s.weights = a.weights.or(s.weights.take());
    cfg.validate().map_err(Error::Usage)?;
    fs::create_dir_all(&a.out_dir).map_err(Error::io(&a.out_dir))?;

    let model = match cfg.sim.perception {
        PerceptionChoice::Oracle => PerceptionModel::Oracle(cfg.oracle_noise()),
        PerceptionChoice::Blob => PerceptionModel::BlobPinhole(blob_pinhole(&cfg)),
        PerceptionChoice::Cnn => {
            let path = cfg
                .sim
                .weights
                .as_deref()
                .ok_or_else(|| Error::Usage("cnn perception needs --weights".into()))?;
            PerceptionModel::Cnn {
                network: Box::new(integer_network(path)?),
                render: blob_pinhole(&cfg),
            }
        }
    };
    let log = run_episode(&build_trajectory(&cfg), &model, &cfg.sim_config(), ctx.seed)?;
    let csv_path = a.out_dir.join(EPISODE_FILE);
    fs::write(&csv_path, outputs::episode_csv(&log)).map_err(Error::io(&csv_path))?;
    let summary = SimulationSummary {
        seed: ctx.seed,
        trajectory: cfg.sim.trajectory.as_str(),
        perception: cfg.sim.perception.as_str(),
        summary: log.summary(),
        abort: log.abort,
    };
    let json_path = a.out_dir.join(SUMMARY_FILE);
    fs::write(&json_path, outputs::to_json(&summary)).map_err(Error::io(&json_path))?;
    match log.abort {
        Some(ab) => Err(Error::Aborted(format!(
            "observer left the flight volume at t={:.3} s, position {:?}",
            ab.t, ab.position
        ))),
        None => Ok(()),
    }
}

enum Predictor {
    Oracle,
    Mean(Pose),
    Blob(BlobPinhole),
    Cnn(Container),
}

fn mean_pose(samples: &[Sample]) -> Pose {
    let n = samples.len() as f64;
    let m = |f: fn(&Pose) -> f64| compensated_sum(samples.iter().map(|s| f(&s.relative))) / n;
    Pose::new(m(|p| p.x), m(|p| p.y), m(|p| p.z), m(|p| p.phi))
}

fn cmd_evaluate(ctx: &Ctx, manifest: &Path, spec: &str, out_dir: &Path) -> Result<()> {
    let samples = dataset::read_manifest(manifest)?;
    let predictor = match spec.split_once(':') {
        None if spec == "oracle" => Predictor::Oracle,
        None if spec == "mean" => Predictor::Mean(mean_pose(&samples)),
        None if spec == "blob" => Predictor::Blob(blob_pinhole(&ctx.cfg)),
        Some(("cnn", path)) => Predictor::Cnn(read_container(Path::new(path))?),
        _ => {
            return Err(Error::Usage(format!(
                "unknown predictor `{spec}`; expected oracle, mean, blob or cnn:<weights>"
            )))
        }
    };
    fs::create_dir_all(out_dir).map_err(Error::io(out_dir))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let load = |s: &Sample| pgm::read(&base.join(&s.frame)).map_err(|e| e.to_string());
    let (report, scatter) =
        evaluate(
            samples.iter().map(|s| (s, s.relative)),
            |s: &&Sample| match &predictor {
                Predictor::Oracle => Ok(s.relative),
                Predictor::Mean(p) => Ok(*p),
                Predictor::Blob(b) => {
                    let f = load(s)?;
                    let blob = detect_blob(&f, &b.detector)
                        .ok_or_else(|| "no target detected".to_string())?;
                    Ok(estimate_pose_from_blob(&blob, &b.camera, b.target.area()))
                }
                Predictor::Cnn(c) => infer(c, &load(s)?),
            },
        );
    let out = EvaluationOutput {
        seed: ctx.seed,
        predictor: spec,
        report: &report,
    };
    let rp = out_dir.join(REPORT_FILE);
    fs::write(&rp, outputs::to_json(&out)).map_err(Error::io(&rp))?;
    let sp = out_dir.join(SCATTER_FILE);
    fs::write(&sp, outputs::scatter_csv(&scatter)).map_err(Error::io(&sp))
}
