//! Scene fitting: Adam over packed parameters, synthetic targets and the
//! four-arm ablation harness.

mod ablation;
mod adam;
mod synthetic;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{backward_loss, backward_render};
use crate::diagnostics::psnr;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::logit;
use crate::loss::{LossBreakdown, Objective, DEFAULT_ALPHA_FLOOR, DEFAULT_EPSILON, DEFAULT_LAMBDA1, DEFAULT_LAMBDA2, DEFAULT_LAMBDA3};
use crate::raster::{render, render_with_tape, RenderConfig, SampleSpec};
use crate::scene::{pack_params, save_scene, unpack_params, CameraModel, Gaussian3D, Scene, IDENTITY_QUAT};

pub use ablation::{benchmark, run_ablation, AblationOverrides, AblationRow, AblationTable, Benchmark, BENCHMARKS};
pub use adam::{adam_step, AdamConfig, AdamState, LearningRates};
pub use synthetic::{
    aliasing_scene, checkerboard, edge_pattern, make_synthetic_target, pattern_scene, random_blob_scene,
    rotated_checker_pattern, SyntheticTarget, TargetKind,
};

/// Which augmentations a run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Arm {
    /// One sample per pixel, plain L1 + D-SSIM.
    Baseline,
    /// Four samples per pixel, plain L1 + D-SSIM.
    MsaaOnly,
    /// One sample per pixel, adaptive weights and gradient-difference term.
    ConstraintsOnly,
    /// Four samples per pixel with adaptive weights and gradient difference.
    Full,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::Baseline, Arm::MsaaOnly, Arm::ConstraintsOnly, Arm::Full];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Baseline => "baseline",
            Arm::MsaaOnly => "msaa_only",
            Arm::ConstraintsOnly => "constraints_only",
            Arm::Full => "full",
        }
    }

    pub fn uses_msaa(self) -> bool {
        matches!(self, Arm::MsaaOnly | Arm::Full)
    }

    pub fn uses_constraints(self) -> bool {
        matches!(self, Arm::ConstraintsOnly | Arm::Full)
    }

    pub fn sample_spec(self) -> SampleSpec {
        if self.uses_msaa() {
            SampleSpec::rotated_grid4()
        } else {
            SampleSpec::single()
        }
    }
}

impl std::str::FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s || a.name().replace('_', "-") == s)
            .ok_or_else(|| Error::Unknown {
                kind: "arm",
                name: s.to_string(),
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub rates: LearningRates,
    pub adam: AdamConfig,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Ramp the gradient-difference weight linearly from 0 over the first
    /// half of training.
    pub lambda3_ramp: bool,
    pub alpha_floor: f64,
    pub weight_epsilon: f64,
    /// Replaces the arm's sample pattern when set.
    pub samples: Option<SampleSpec>,
    pub render: RenderConfig,
    /// Drives the per-epoch view order.
    pub seed: u64,
    pub arm: Arm,
    /// Evaluate and log every this many iterations (the last one always is).
    pub log_every: usize,
    pub checkpoint_every: Option<usize>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            rates: LearningRates::default(),
            adam: AdamConfig::default(),
            lambda1: DEFAULT_LAMBDA1,
            lambda2: DEFAULT_LAMBDA2,
            lambda3: DEFAULT_LAMBDA3,
            lambda3_ramp: false,
            alpha_floor: DEFAULT_ALPHA_FLOOR,
            weight_epsilon: DEFAULT_EPSILON,
            samples: None,
            render: RenderConfig::default(),
            seed: 0,
            arm: Arm::Full,
            log_every: 10,
            checkpoint_every: None,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.log_every == 0 {
            return Err(Error::Config("log interval must be positive".into()));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::Config("checkpoint interval must be positive".into()));
        }
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("lambda3", self.lambda3)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        self.rates.validate()?;
        self.render.validate()
    }

    pub fn sample_spec(&self) -> SampleSpec {
        self.samples.clone().unwrap_or_else(|| self.arm.sample_spec())
    }

    /// Loss terms active for this arm at iteration `k`.
    pub fn objective_at(&self, k: usize) -> Objective {
        let constraints = self.arm.uses_constraints();
        let mut lambda3 = if constraints { self.lambda3 } else { 0.0 };
        if self.lambda3_ramp {
            let half = self.iterations / 2;
            if half > 0 && k < half {
                lambda3 *= k as f64 / half as f64;
            }
        }
        Objective {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3,
            adaptive_weights: constraints,
            gradient_term: constraints,
            alpha_floor: self.alpha_floor,
            epsilon: self.weight_epsilon,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainRecord {
    /// Number of optimizer steps applied before this evaluation.
    pub iteration: usize,
    pub loss: LossBreakdown,
    /// Mean PSNR over all target views.
    pub psnr: f64,
    /// Wall-clock since the start; zero in deterministic mode.
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str = "iteration,weighted_l1,dssim,grad,composite,psnr,seconds";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.iteration, r.loss.weighted_l1, r.loss.dssim, r.loss.grad, r.loss.composite, r.psnr, r.seconds
            )
            .unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Best PSNR seen up to each record.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.records
            .iter()
            .map(|r| {
                best = best.max(r.psnr);
                best
            })
            .collect()
    }

    pub fn last(&self) -> Option<&TrainRecord> {
        self.records.last()
    }
}

/// Where a run stopped because the loss went non-finite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Divergence {
    pub iteration: usize,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Snapshot with the highest logged PSNR.
    pub scene: Scene,
    pub best_psnr: f64,
    pub best_iteration: usize,
    /// Parameters after the last successful step.
    pub final_scene: Scene,
    pub log: TrainLog,
    pub divergence: Option<Divergence>,
}

impl TrainOutcome {
    /// Turns a divergence into an error.
    pub fn into_result(self) -> Result<Self> {
        match self.divergence {
            Some(d) => Err(Error::Diverged {
                iteration: d.iteration,
                value: d.value,
            }),
            None => Ok(self),
        }
    }
}

fn checkpoint(cfg: &TrainConfig, scene: &Scene, k: usize) -> Result<()> {
    if let (Some(every), Some(dir)) = (cfg.checkpoint_every, &cfg.checkpoint_dir) {
        if k.is_multiple_of(every) || k == cfg.iterations {
            fs::create_dir_all(dir)?;
            save_scene(scene, dir.join(format!("{}_{k}.gsscene", cfg.arm.name())))?;
        }
    }
    Ok(())
}

/// Fits `scene0` to the target views.
///
/// Each iteration renders one view (views are visited in a seed-shuffled
/// order per epoch), evaluates the arm's objective, back-propagates with
/// the weight map frozen, and takes one Adam step.
pub fn train(scene0: &Scene, targets: &[(CameraModel, ImageBuffer)], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if targets.is_empty() {
        return Err(Error::Config("training needs at least one target view".into()));
    }
    scene0.validate()?;
    cfg.validate()?;
    for (cam, img) in targets {
        cam.validate()?;
        if img.height() != cam.height || img.width() != cam.width {
            return Err(Error::Shape(format!(
                "target is {}x{} but its camera is {}x{}",
                img.height(),
                img.width(),
                cam.height,
                cam.width
            )));
        }
    }
    let spec = cfg.sample_spec();
    let start = Instant::now();
    let clock = || if cfg.render.deterministic { 0.0 } else { start.elapsed().as_secs_f64() };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..targets.len()).collect();
    let mut cursor = order.len();

    let mut params = pack_params(scene0);
    let mut state = AdamState::new(params.len());
    let mut scene = scene0.clone();
    let mut log = TrainLog::default();
    let mut best: Option<(f64, usize, Scene)> = None;
    let mut divergence = None;

    for k in 0..=cfg.iterations {
        if cursor == order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let view = order[cursor];
        cursor += 1;
        let (cam, gt) = &targets[view];
        let objective = cfg.objective_at(k);
        let (img, tape) = render_with_tape(&scene, cam, &cfg.render, &spec)?;
        let (loss, weights) = objective.evaluate(&img, gt)?;
        if !loss.composite.is_finite() {
            divergence = Some(Divergence {
                iteration: k,
                value: loss.composite,
            });
            break;
        }

        if k % cfg.log_every == 0 || k == cfg.iterations {
            let mut total = 0.0;
            for (v, (c, t)) in targets.iter().enumerate() {
                total += if v == view { psnr(&img, t)? } else { psnr(&render(&scene, c, &cfg.render, &spec)?, t)? };
            }
            let p = total / targets.len() as f64;
            log.records.push(TrainRecord {
                iteration: k,
                loss,
                psnr: p,
                seconds: clock(),
            });
            if best.as_ref().is_none_or(|(b, _, _)| p > *b) {
                best = Some((p, k, scene.clone()));
            }
            checkpoint(cfg, &scene, k)?;
        }
        if k == cfg.iterations {
            break;
        }

        let d_image = backward_loss(&img, gt, &objective, &weights)?;
        let grads = backward_render(&tape, &d_image, &scene, cam)?;
        adam_step(&mut params, &grads.params, &mut state, &cfg.adam, &cfg.rates)?;
        scene = unpack_params(&params, &scene)?;
    }

    let (best_psnr, best_iteration, best_scene) = best.unwrap_or_else(|| (f64::NAN, 0, scene.clone()));
    Ok(TrainOutcome {
        scene: best_scene,
        best_psnr,
        best_iteration,
        final_scene: scene,
        log,
        divergence,
    })
}

/// Uniformly placed isotropic Gaussians: scale is half the mean
/// nearest-neighbor distance, color logits are 0 (mid gray) and opacity 0.1.
pub fn initial_scene(count: usize, lo: Vector3<f64>, hi: Vector3<f64>, seed: u64, background: [f64; 3]) -> Result<Scene> {
    if count == 0 {
        return Err(Error::Config("initial scene needs at least one gaussian".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vector3<f64>> = (0..count)
        .map(|_| {
            Vector3::new(
                lo.x + (hi.x - lo.x) * rng.random::<f64>(),
                lo.y + (hi.y - lo.y) * rng.random::<f64>(),
                lo.z + (hi.z - lo.z) * rng.random::<f64>(),
            )
        })
        .collect();
    let nn_mean = if count > 1 {
        let total: f64 = centers
            .iter()
            .enumerate()
            .map(|(i, a)| {
                centers
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, b)| (a - b).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        total / count as f64
    } else {
        (hi - lo).norm()
    };
    let log_scale = (0.5 * nn_mean).max(1e-6).ln();
    let gaussians = centers
        .into_iter()
        .map(|center| Gaussian3D {
            center,
            rotation: IDENTITY_QUAT,
            log_scale: Vector3::repeat(log_scale),
            color_logit: Vector3::zeros(),
            opacity_logit: logit(0.1),
        })
        .collect();
    let scene = Scene::new(gaussians, background);
    scene.validate()?;
    Ok(scene)
}
