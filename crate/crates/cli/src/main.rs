use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deftemp::pipeline::{run_pipeline, run_track, Dumps, Mode, PipelineConfig, PipelineError, Settings};
use deftemp::raster::{make_fixture, save_image, save_template, FixtureSpec, Pose, ShapeKind};

#[derive(Parser, Debug)]
#[command(name = "deftemp", version, about = "Deformable template matching and segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment one image.
    Run {
        #[arg(long)]
        image: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Track the template through an ordered image sequence.
    Track {
        /// Glob pattern; matches are processed in sorted order.
        #[arg(long)]
        images: String,
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic fixture: image.pgm, template.txt, truth.txt, boundary.csv.
    Fixture(FixtureArgs),
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    template: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Line-oriented `key = value` settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    roi_percentile: Option<f64>,
    #[arg(long)]
    roi_max_windows: Option<usize>,
    #[arg(long)]
    pso_seed: Option<u64>,
    #[arg(long)]
    pso_iters: Option<usize>,
    #[arg(long)]
    pso_particles: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Per control point search radius, px.
    #[arg(long)]
    cp_radius: Option<f64>,
    /// Start Stage 3 from a centered unit pose instead of searching.
    #[arg(long)]
    skip_roi: bool,
    #[arg(long)]
    dump_epf: bool,
    #[arg(long)]
    dump_candidates: bool,
    #[arg(long)]
    dump_trace: bool,
    #[arg(long)]
    dump_warp: bool,
    #[arg(long)]
    dump_roi: bool,
}

#[derive(Args, Debug)]
struct FixtureArgs {
    /// ellipse, rectangle or c-shape
    #[arg(long, default_value = "ellipse")]
    shape: String,
    #[arg(long, default_value_t = 256)]
    size: usize,
    /// Comma-separated `s=..,theta=..,dx=..,dy=..`; omitted keys keep the
    /// centered unit pose.
    #[arg(long)]
    pose: Option<String>,
    /// Boundary sinusoid amplitude, px.
    #[arg(long, default_value_t = 0.0)]
    deform: f64,
    #[arg(long, default_value_t = 3)]
    lobes: u32,
    #[arg(long, default_value_t = 0.0)]
    phase: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    control_points: usize,
    #[arg(long)]
    out: PathBuf,
}

fn settings_for(c: &Common) -> Result<Settings, PipelineError> {
    let mut s = match &c.config {
        Some(p) => Settings::from_file(p)?,
        None => Settings::default(),
    };
    if let Some(v) = c.roi_percentile {
        s.roi.percentile = v;
    }
    if let Some(v) = c.roi_max_windows {
        s.roi.max_windows = v;
    }
    if let Some(v) = c.pso_seed {
        s.swarm.seed = v;
    }
    if let Some(v) = c.pso_iters {
        s.swarm.iterations = v;
    }
    if let Some(v) = c.pso_particles {
        s.swarm.particles = v;
    }
    if let Some(v) = c.alpha {
        s.swarm.alpha = v;
    }
    if let Some(v) = c.cp_radius {
        s.swarm.radius = v;
    }
    if c.skip_roi {
        s.skip_roi = true;
    }
    Ok(s)
}

fn config_for(mode: Mode, images: Vec<PathBuf>, c: &Common) -> Result<PipelineConfig, PipelineError> {
    Ok(PipelineConfig {
        mode,
        images,
        template: c.template.clone(),
        out_dir: c.out.clone(),
        settings: settings_for(c)?,
        dumps: Dumps {
            epf: c.dump_epf,
            candidates: c.dump_candidates,
            trace: c.dump_trace,
            warp: c.dump_warp,
            roi: c.dump_roi,
        },
    })
}

fn expand(pattern: &str) -> Result<Vec<PathBuf>, PipelineError> {
    let paths = glob::glob(pattern).map_err(|e| PipelineError::Config(format!("bad glob '{pattern}': {e}")))?;
    let mut out = paths
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| PipelineError::Io(e.to_string()))?;
    out.sort();
    Ok(out)
}

fn parse_pose(text: &str, base: Pose) -> Result<Pose, PipelineError> {
    let mut p = base;
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| PipelineError::Config(format!("pose entry '{part}' is not key=value")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| PipelineError::Config(format!("pose value '{}' is not a number", v.trim())))?;
        match k.trim() {
            "s" | "scale" => p.scale = v,
            "theta" | "rotation" => p.rotation = v,
            "dx" => p.dx = v,
            "dy" => p.dy = v,
            other => return Err(PipelineError::Config(format!("unknown pose key '{other}'"))),
        }
    }
    Ok(p)
}

fn write(path: &Path, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
}

fn fixture(a: &FixtureArgs) -> Result<(), PipelineError> {
    let shape: ShapeKind = a.shape.parse().map_err(|e| PipelineError::Config(format!("{e}")))?;
    let mut spec = FixtureSpec::new(shape, a.size);
    if let Some(p) = &a.pose {
        spec.pose = parse_pose(p, spec.pose)?;
    }
    spec.deform = a.deform;
    spec.lobes = a.lobes;
    spec.phase = a.phase;
    spec.noise = a.noise;
    spec.seed = a.seed;
    spec.control_points = a.control_points;
    let f = make_fixture(&spec)?;
    std::fs::create_dir_all(&a.out).map_err(|e| PipelineError::Io(format!("{}: {e}", a.out.display())))?;
    save_image(&f.image, a.out.join("image.pgm"))?;
    save_template(&f.template, a.out.join("template.txt"))?;

    let mut truth = String::new();
    let p = f.truth_pose;
    let _ = writeln!(truth, "shape={}", shape.name());
    let _ = writeln!(truth, "width={}\nheight={}", spec.width, spec.height);
    let _ = writeln!(truth, "pose_scale={}\npose_theta={}\npose_dx={}\npose_dy={}", p.scale, p.rotation, p.dx, p.dy);
    let _ = writeln!(truth, "deform={}\nlobes={}\nphase={}", spec.deform, spec.lobes, spec.phase);
    let _ = writeln!(truth, "noise={}\nseed={}", spec.noise, spec.seed);
    for (i, c) in f.truth_control_points.iter().enumerate() {
        let _ = writeln!(truth, "cp{i}={},{}", c.x, c.y);
    }
    write(&a.out.join("truth.txt"), &truth)?;

    let mut boundary = String::from("x,y\n");
    for q in &f.truth_boundary {
        let _ = writeln!(boundary, "{},{}", q.x, q.y);
    }
    write(&a.out.join("boundary.csv"), &boundary)
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Run { image, common } => {
            let cfg = config_for(Mode::Single, vec![image], &common)?;
            let r = run_pipeline(&cfg)?;
            println!(
                "final_cost={} pose_scale={} pose_theta={} pose_dx={} pose_dy={}",
                r.final_cost, r.pose.scale, r.pose.rotation, r.pose.dx, r.pose.dy
            );
            Ok(())
        }
        Command::Track { images, common } => {
            let cfg = config_for(Mode::Track, expand(&images)?, &common)?;
            let frames = run_track(&cfg)?;
            let mut first_err = None;
            for f in &frames {
                match &f.outcome {
                    Ok(r) => println!("frame={} final_cost={} relocalized={}", f.index, r.final_cost, f.relocalized),
                    Err(e) => {
                        println!("frame={} error={e}", f.index);
                        first_err.get_or_insert_with(|| e.clone());
                    }
                }
            }
            first_err.map_or(Ok(()), Err)
        }
        Command::Fixture(a) => fixture(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("deftemp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
