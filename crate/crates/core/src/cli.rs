//! The `splat` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 gradient
//! check failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;

use crate::autodiff::{default_fixture, grad_check, GradCheckOptions};
use crate::diagnostics::{diff_map, haar_dwt, psnr, ssim, write_subbands};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::loss::Objective;
use crate::raster::{render, CompositingMode, RenderConfig, SampleSpec};
use crate::scene::{load_camera, load_scene, save_camera, save_scene, CameraModel, Scene};
use crate::train::{
    aliasing_scene, initial_scene, make_synthetic_target, run_ablation, train, AblationOverrides, Arm, LearningRates,
    TargetKind, TrainConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_GRADCHECK: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "splat", version, about = "Differentiable Gaussian splatting with multi-sample anti-aliasing")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
struct RenderArgs {
    /// Subsamples per pixel: 1, 2, 4 or a perfect square.
    #[arg(long)]
    samples: Option<usize>,

    /// normalized or front-to-back.
    #[arg(long, default_value = "normalized")]
    compositing: CompositingMode,

    /// Fixed-order reduction of per-tile gradients.
    #[arg(long)]
    deterministic: bool,
}

impl RenderArgs {
    fn config(&self) -> RenderConfig {
        RenderConfig {
            mode: self.compositing,
            deterministic: self.deterministic,
            ..RenderConfig::default()
        }
    }

    fn spec(&self) -> Result<Option<SampleSpec>> {
        self.samples.map(SampleSpec::for_count).transpose()
    }
}

#[derive(Debug, Args, Clone)]
struct LossArgs {
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    lambda3: Option<f64>,
    /// Lower bound of the adaptive pixel weights.
    #[arg(long)]
    alpha_floor: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a scene from a camera to a PPM image.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Fit a scene to target views.
    Train {
        /// Initial scene; a random one is drawn when omitted.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Random initial scene size when no scene is given.
        #[arg(long, default_value_t = 200)]
        gaussians: usize,
        /// Camera of each target view (repeat, paired with --target).
        #[arg(long, required = true)]
        camera: Vec<PathBuf>,
        #[arg(long, required = true)]
        target: Vec<PathBuf>,
        #[arg(long, default_value = "full")]
        arm: Arm,
        #[arg(long, default_value_t = 2000)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Ramp the gradient-difference weight in over the first half.
        #[arg(long)]
        lambda3_ramp: bool,
        #[arg(long, default_value_t = 10)]
        log_every: usize,
        #[arg(long)]
        checkpoint_every: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        loss: LossArgs,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Train all four ablation arms on a registered benchmark.
    Ablate {
        #[arg(long, default_value = "checker_edge")]
        bench: String,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Only these arms (comma separated).
        #[arg(long, value_delimiter = ',')]
        arm: Vec<Arm>,
        /// Write the table as CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        loss: LossArgs,
        #[arg(long, default_value = "normalized")]
        compositing: CompositingMode,
        #[arg(long)]
        deterministic: bool,
    },
    /// Compare analytic gradients with finite differences on the default fixture.
    Gradcheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[command(flatten)]
        loss: LossArgs,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// PSNR and SSIM for image pairs.
    Metrics {
        /// Images as pairs: PRED GT [PRED GT ...].
        #[arg(required = true, num_args = 2..)]
        images: Vec<PathBuf>,
    },
    /// Inverse-coded difference map (white where the images agree).
    Diff {
        pred: PathBuf,
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Single-level Haar subbands and raw coefficients.
    Wavelet {
        image: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// File name prefix (defaults to the input file stem).
        #[arg(long)]
        stem: Option<String>,
    },
    /// Write an alias-prone benchmark scene, its camera and reference images.
    MakeBench {
        /// checkerboard, thin_lines, edge_halfplane or gaussian_blobs.
        #[arg(long, default_value = "edge_halfplane")]
        kind: TargetKind,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

/// Runs the tool on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Error::Config(format!("cannot build thread pool: {e}"))),
        },
        None => dispatch(cli.command),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn objective(loss: &LossArgs, base: Objective) -> Objective {
    Objective {
        lambda1: loss.lambda1.unwrap_or(base.lambda1),
        lambda2: loss.lambda2.unwrap_or(base.lambda2),
        lambda3: loss.lambda3.unwrap_or(base.lambda3),
        alpha_floor: loss.alpha_floor.unwrap_or(base.alpha_floor),
        ..base
    }
}

fn out(line: impl AsRef<str>) {
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{}", line.as_ref());
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Render {
            scene,
            camera,
            out: path,
            render: r,
        } => {
            let scene = load_scene(&scene)?;
            let cam = load_camera(&camera)?;
            let spec = r.spec()?.unwrap_or_default();
            render(&scene, &cam, &r.config(), &spec)?.write_ppm(&path)?;
            out(format!("wrote {}", path.display()));
        }
        Command::Train {
            scene,
            gaussians,
            camera,
            target,
            arm,
            iterations,
            seed,
            lambda3_ramp,
            log_every,
            checkpoint_every,
            out_dir,
            loss,
            render: r,
        } => {
            if camera.len() != target.len() {
                return Err(Error::Config(format!(
                    "{} cameras but {} targets; pass them in pairs",
                    camera.len(),
                    target.len()
                )));
            }
            let views = camera
                .iter()
                .zip(&target)
                .map(|(c, t)| Ok((load_camera(c)?, ImageBuffer::read_ppm(t)?)))
                .collect::<Result<Vec<_>>>()?;
            let scene0 = match scene {
                Some(p) => load_scene(p)?,
                None => random_start(&views[0].0, gaussians, seed)?,
            };
            let base = TrainConfig::default();
            let cfg = TrainConfig {
                iterations,
                rates: LearningRates::for_extent(extent(&views[0].0)),
                lambda1: loss.lambda1.unwrap_or(base.lambda1),
                lambda2: loss.lambda2.unwrap_or(base.lambda2),
                lambda3: loss.lambda3.unwrap_or(base.lambda3),
                lambda3_ramp,
                alpha_floor: loss.alpha_floor.unwrap_or(base.alpha_floor),
                samples: r.spec()?,
                render: r.config(),
                seed,
                arm,
                log_every,
                checkpoint_every,
                checkpoint_dir: checkpoint_every.map(|_| out_dir.join("checkpoints")),
                ..base
            };
            fs::create_dir_all(&out_dir)?;
            let outcome = train(&scene0, &views, &cfg)?;
            outcome.log.write_csv(out_dir.join("log.csv"))?;
            save_scene(&outcome.scene, out_dir.join("best.gsscene"))?;
            save_scene(&outcome.final_scene, out_dir.join("final.gsscene"))?;
            out(format!(
                "best psnr {:.3} dB at iteration {}",
                outcome.best_psnr, outcome.best_iteration
            ));
            outcome.into_result()?;
        }
        Command::Ablate {
            bench,
            iterations,
            seed,
            arm,
            out: csv,
            loss,
            compositing,
            deterministic,
        } => {
            let overrides = AblationOverrides {
                iterations,
                seed,
                lambda1: loss.lambda1,
                lambda2: loss.lambda2,
                lambda3: loss.lambda3,
                alpha_floor: loss.alpha_floor,
                render: Some(RenderConfig {
                    mode: compositing,
                    deterministic,
                    ..RenderConfig::default()
                }),
                arms: arm,
                ..AblationOverrides::default()
            };
            let table = run_ablation(&bench, &overrides)?;
            print!("{}", table.to_text());
            if let Some(p) = csv {
                fs::write(p, table.to_csv())?;
            }
        }
        Command::Gradcheck {
            seed,
            tolerance,
            loss,
            render: r,
        } => {
            let (scene, cam, gt) = default_fixture(seed);
            let spec = r.spec()?.unwrap_or_else(SampleSpec::rotated_grid4);
            let opts = GradCheckOptions {
                tolerance,
                ..GradCheckOptions::default()
            };
            let obj = objective(&loss, Objective::default());
            let report = grad_check(&scene, &cam, &gt, &r.config(), &spec, &obj, &opts)?;
            print!("{report}");
            if !report.passed {
                return Ok(EXIT_GRADCHECK);
            }
        }
        Command::Metrics { images } => {
            if images.len() % 2 != 0 {
                return Err(Error::Config("metrics takes image pairs".into()));
            }
            out("pred,gt,psnr,ssim");
            for pair in images.chunks(2) {
                let a = ImageBuffer::read_ppm(&pair[0])?;
                let b = ImageBuffer::read_ppm(&pair[1])?;
                out(format!(
                    "{},{},{:.4},{:.6}",
                    pair[0].display(),
                    pair[1].display(),
                    psnr(&a, &b)?,
                    ssim(&a, &b)?
                ));
            }
        }
        Command::Diff { pred, gt, out: path } => {
            let a = ImageBuffer::read_ppm(&pred)?;
            let b = ImageBuffer::read_ppm(&gt)?;
            diff_map(&a, &b)?.to_image().write_ppm(&path)?;
            out(format!("wrote {}", path.display()));
        }
        Command::Wavelet { image, out_dir, stem } => {
            let img = ImageBuffer::read_ppm(&image)?;
            let stem = stem.unwrap_or_else(|| file_stem(&image));
            fs::create_dir_all(&out_dir)?;
            write_subbands(&haar_dwt(&img), &out_dir, &stem)?;
            out(format!("wrote {} subbands to {}", stem, out_dir.display()));
        }
        Command::MakeBench {
            kind,
            size,
            seed,
            out_dir,
        } => make_bench(kind, size, seed, &out_dir)?,
    }
    Ok(EXIT_OK)
}

fn file_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into())
}

const BENCH_DEPTH: f64 = 4.0;

/// Width of the view frustum at the benchmark depth.
fn extent(cam: &CameraModel) -> f64 {
    cam.width.max(cam.height) as f64 / cam.fx * BENCH_DEPTH
}

/// Random Gaussians filling the view frustum around the benchmark depth.
fn random_start(cam: &CameraModel, count: usize, seed: u64) -> Result<Scene> {
    let half = Vector3::new(
        0.5 * cam.width as f64 / cam.fx * BENCH_DEPTH,
        0.5 * cam.height as f64 / cam.fy * BENCH_DEPTH,
        0.05,
    );
    let center = cam.unproject(cam.cx, cam.cy, BENCH_DEPTH);
    initial_scene(count, center - half, center + half, seed, [0.0; 3])
}

fn make_bench(kind: TargetKind, size: usize, seed: u64, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let name = kind.name();
    let (scene, cam) = match kind {
        TargetKind::GaussianBlobs => {
            let t = make_synthetic_target(kind, size, size, seed)?;
            (t.scene.expect("blob targets carry a scene"), t.camera.expect("blob targets carry a camera"))
        }
        _ => aliasing_scene(kind, size, seed)?,
    };
    let cfg = RenderConfig::default();
    save_scene(&scene, dir.join(format!("{name}.gsscene")))?;
    save_camera(&cam, dir.join(format!("{name}.gscam")))?;
    render(&scene, &cam, &cfg, &SampleSpec::grid(8))?.write_ppm(dir.join(format!("{name}_reference.ppm")))?;
    out(format!("wrote {name} benchmark to {}", dir.display()));
    Ok(())
}
