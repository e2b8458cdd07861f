//! Four-arm ablation on registered synthetic benchmarks.
//!
//! A benchmark is a ground-truth scene of sub-pixel Gaussians, rendered
//! with an 8×8 stratified pattern from a ring of training cameras and from
//! held-out test cameras. Every arm starts from the same initial scene and
//! is scored on the test views, rendered with the arm's own sample pattern.

use std::fmt::Write as _;

use nalgebra::Vector3;

use super::{initial_scene, pattern_scene, rotated_checker_pattern, train, Arm, LearningRates, TrainConfig};
use crate::diagnostics::{psnr, ssim};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::loss::LossBreakdown;
use crate::raster::{render, RenderConfig, SampleSpec};
use crate::scene::{CameraModel, Scene};

/// Registered benchmark settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Benchmark {
    pub id: &'static str,
    pub size: usize,
    pub seed: u64,
    pub iterations: usize,
    pub gaussians: usize,
    pub train_views: usize,
    pub test_views: usize,
    /// Rotated checkerboard cell size in pixels.
    pub checker_period: f64,
    /// Multiplier on the default learning rates.
    pub rate_scale: f64,
    pub lambda3_ramp: bool,
}

pub const BENCHMARKS: &[Benchmark] = &[
    Benchmark {
        id: "checker_edge",
        size: 64,
        seed: 7,
        iterations: 2000,
        gaussians: 400,
        train_views: 4,
        test_views: 2,
        checker_period: 6.0,
        rate_scale: 1.0,
        lambda3_ramp: true,
    },
    Benchmark {
        id: "smoke",
        size: 24,
        seed: 7,
        iterations: 20,
        gaussians: 40,
        train_views: 2,
        test_views: 1,
        checker_period: 4.0,
        rate_scale: 1.0,
        lambda3_ramp: true,
    },
];

pub fn benchmark(id: &str) -> Result<&'static Benchmark> {
    BENCHMARKS.iter().find(|b| b.id == id).ok_or_else(|| Error::Unknown {
        kind: "benchmark",
        name: id.to_string(),
    })
}

const DEPTH: f64 = 4.0;

/// Ground-truth scene, views and the shared starting point of a benchmark.
#[derive(Clone, Debug)]
pub struct BenchmarkData {
    pub ground_truth: Scene,
    pub train: Vec<(CameraModel, ImageBuffer)>,
    pub test: Vec<(CameraModel, ImageBuffer)>,
    pub scene0: Scene,
    pub extent: f64,
}

fn focal(size: usize) -> f64 {
    1.5 * size as f64
}

/// Camera on a small circle around the axis, looking at the layer center.
fn orbit_camera(size: usize, angle: f64, radius: f64) -> CameraModel {
    let eye = Vector3::new(radius * angle.cos(), radius * angle.sin(), 0.0);
    CameraModel::look_at(eye, Vector3::new(0.0, 0.0, DEPTH), Vector3::new(0.0, -1.0, 0.0), size, size, focal(size))
}

impl Benchmark {
    pub fn build(&self, seed: u64) -> Result<BenchmarkData> {
        let size = self.size;
        let center_cam = CameraModel::centered(size, size, focal(size));
        let c = size as f64 / 2.0;
        let checker = rotated_checker_pattern(c, c, self.checker_period, 0.35, [0.12, 0.15, 0.2], [0.9, 0.85, 0.75]);
        let (s, co) = 0.2f64.sin_cos();
        // slanted edge: checkerboard on one side, a flat warm color on the other
        let pattern = move |x: f64, y: f64| {
            if (x - c - 4.0) * co + (y - c) * s >= 0.0 {
                [0.85, 0.35, 0.2]
            } else {
                checker(x, y)
            }
        };
        let ground_truth = pattern_scene(&center_cam, DEPTH, 0.5, 0.25, 0.95, pattern);
        let reference = SampleSpec::grid(8);
        let cfg = RenderConfig::default();
        let radius = 0.06;
        let views = |count: usize, phase: f64| -> Result<Vec<(CameraModel, ImageBuffer)>> {
            (0..count)
                .map(|k| {
                    let cam = orbit_camera(size, phase + k as f64 * std::f64::consts::TAU / count as f64, radius);
                    let img = render(&ground_truth, &cam, &cfg, &reference)?;
                    Ok((cam, img))
                })
                .collect()
        };
        let train = views(self.train_views, 0.0)?;
        let test = views(self.test_views, 0.5)?;
        let half = 0.5 * size as f64 / focal(size) * DEPTH;
        let extent = 2.0 * half;
        let scene0 = initial_scene(
            self.gaussians,
            Vector3::new(-half, -half, DEPTH - 0.05),
            Vector3::new(half, half, DEPTH + 0.05),
            seed,
            [0.0; 3],
        )?;
        Ok(BenchmarkData {
            ground_truth,
            train,
            test,
            scene0,
            extent,
        })
    }
}

/// Optional changes to a benchmark's defaults.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AblationOverrides {
    pub iterations: Option<usize>,
    pub seed: Option<u64>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub lambda3: Option<f64>,
    pub alpha_floor: Option<f64>,
    pub lambda3_ramp: Option<bool>,
    pub gaussians: Option<usize>,
    pub render: Option<RenderConfig>,
    /// Only run these arms (all four when empty).
    pub arms: Vec<Arm>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub arm: Arm,
    pub psnr: f64,
    pub ssim: f64,
    pub train_psnr: f64,
    pub loss: LossBreakdown,
    pub scene0_fingerprint: u64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub benchmark: String,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub const CSV_HEADER: &'static str = "arm,psnr,ssim,train_psnr,weighted_l1,dssim,grad,composite";

    pub fn row(&self, arm: Arm) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.arm == arm)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.arm.name(),
                r.psnr,
                r.ssim,
                r.train_psnr,
                r.loss.weighted_l1,
                r.loss.dssim,
                r.loss.grad,
                r.loss.composite
            )
            .unwrap();
        }
        s
    }

    /// Aligned plain-text rendering of the table.
    pub fn to_text(&self) -> String {
        let mut s = format!("benchmark {}\n", self.benchmark);
        writeln!(
            s,
            "{:<17} {:>9} {:>8} {:>11} {:>11} {:>9} {:>9} {:>10}",
            "arm", "psnr_dB", "ssim", "train_psnr", "weighted_l1", "dssim", "grad", "composite"
        )
        .unwrap();
        for r in &self.rows {
            writeln!(
                s,
                "{:<17} {:>9.3} {:>8.4} {:>11.3} {:>11.5} {:>9.5} {:>9.5} {:>10.5}",
                r.arm.name(),
                r.psnr,
                r.ssim,
                r.train_psnr,
                r.loss.weighted_l1,
                r.loss.dssim,
                r.loss.grad,
                r.loss.composite
            )
            .unwrap();
        }
        s
    }
}

/// Trains every arm from the benchmark's shared initial scene and scores
/// each on the held-out views.
pub fn run_ablation(id: &str, overrides: &AblationOverrides) -> Result<AblationTable> {
    let bench = benchmark(id)?;
    let seed = overrides.seed.unwrap_or(bench.seed);
    let bench = Benchmark {
        gaussians: overrides.gaussians.unwrap_or(bench.gaussians),
        ..*bench
    };
    let data = bench.build(seed)?;
    let fingerprint = data.scene0.fingerprint();
    let arms = if overrides.arms.is_empty() { Arm::ALL.to_vec() } else { overrides.arms.clone() };
    let mut rows = Vec::with_capacity(arms.len());
    for arm in arms {
        let scene0 = data.scene0.clone();
        if scene0.fingerprint() != fingerprint {
            return Err(Error::Validation("arms must share the initial scene".into()));
        }
        let defaults = TrainConfig::default();
        let cfg = TrainConfig {
            iterations: overrides.iterations.unwrap_or(bench.iterations),
            rates: LearningRates::for_extent(data.extent).scaled(bench.rate_scale),
            lambda1: overrides.lambda1.unwrap_or(defaults.lambda1),
            lambda2: overrides.lambda2.unwrap_or(defaults.lambda2),
            lambda3: overrides.lambda3.unwrap_or(defaults.lambda3),
            alpha_floor: overrides.alpha_floor.unwrap_or(defaults.alpha_floor),
            lambda3_ramp: overrides.lambda3_ramp.unwrap_or(bench.lambda3_ramp),
            render: overrides.render.unwrap_or_default(),
            seed,
            arm,
            log_every: 50,
            ..defaults
        };
        let start = std::time::Instant::now();
        let outcome = train(&scene0, &data.train, &cfg)?.into_result()?;
        let spec = cfg.sample_spec();
        let mut p = 0.0;
        let mut q = 0.0;
        for (cam, gt) in &data.test {
            let img = render(&outcome.final_scene, cam, &cfg.render, &spec)?;
            p += psnr(&img, gt)?;
            q += ssim(&img, gt)?;
        }
        let n = data.test.len() as f64;
        let last = outcome.log.last().expect("training logs the final iteration");
        rows.push(AblationRow {
            arm,
            psnr: p / n,
            ssim: q / n,
            train_psnr: last.psnr,
            loss: last.loss,
            scene0_fingerprint: fingerprint,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(AblationTable {
        benchmark: bench.id.to_string(),
        rows,
    })
}
