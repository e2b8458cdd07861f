//! Central finite-difference check of the analytic gradient.
//!
//! The loss checked is the end-to-end objective with the adaptive weight map
//! frozen at the base render, matching what the backward pass
//! differentiates. Each scalar is perturbed by `±h` and `±h/2` and the two
//! central differences are Richardson-extrapolated. A perturbation that
//! changes the set of contributing splats or the sign pattern of an L1 term
//! crosses a kink; such entries are retried with smaller steps and, if they
//! stay non-smooth, reported as flagged instead of compared.

use std::fmt::{self, Write as _};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::image::ImageBuffer;
use crate::loss::{gradient_field, Objective, WeightMap};
use crate::raster::{render_with_tape, RenderConfig, SampleSpec, Tape};
use crate::scene::{pack_params, unpack_params, CameraModel, Gaussian3D, ParamField, Scene, PARAMS_PER_GAUSSIAN};

use super::{backward_loss, backward_render, GradBuffer};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckOptions {
    /// Maximum accepted relative error per parameter class.
    pub tolerance: f64,
    /// Base step, scaled by `max(1, |θ|)`.
    pub step: f64,
    /// How many times a flagged entry is retried with a 10× smaller step.
    pub refinements: usize,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            step: 1e-4,
            refinements: 3,
        }
    }
}

/// One checked scalar.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamCheck {
    pub gaussian: usize,
    pub field: ParamField,
    pub component: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// `|a − b| / max(|a|, |b|, 1e-8)`.
    pub rel_err: f64,
    /// The finite-difference stencil crossed a cutoff or an L1 kink.
    pub nonsmooth: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassSummary {
    pub field: ParamField,
    pub max_rel_err: f64,
    /// `(gaussian, component)` of the worst entry.
    pub location: Option<(usize, usize)>,
    pub checked: usize,
    pub flagged: usize,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub entries: Vec<ParamCheck>,
    pub classes: Vec<ClassSummary>,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.classes.iter().map(|c| c.max_rel_err).fold(0.0, f64::max)
    }

    pub fn flagged(&self) -> usize {
        self.classes.iter().map(|c| c.flagged).sum()
    }

    /// Aligned plain-text table, one row per parameter class.
    pub fn table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{:<10} {:>12} {:>10} {:>8} {:>8}  result", "class", "max_rel_err", "location", "checked", "flagged").unwrap();
        for c in &self.classes {
            let loc = c.location.map_or("-".to_string(), |(g, k)| format!("g{g}[{k}]"));
            writeln!(
                s,
                "{:<10} {:>12.3e} {:>10} {:>8} {:>8}  {}",
                c.field.name(),
                c.max_rel_err,
                loc,
                c.checked,
                c.flagged,
                if c.pass { "pass" } else { "FAIL" }
            )
            .unwrap();
        }
        writeln!(
            s,
            "tolerance {:.1e}: {}",
            self.tolerance,
            if self.passed { "PASS" } else { "FAIL" }
        )
        .unwrap();
        s
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.table())
    }
}

/// The standard check fixture: five Gaussians well inside a 16×16 view and a
/// noise target, all drawn from `seed`.
pub fn default_fixture(seed: u64) -> (Scene, CameraModel, ImageBuffer) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussians = (0..5)
        .map(|_| {
            let center = Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(3.5..4.5));
            let q = [1.0, rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6)];
            let scale = Vector3::new(rng.random_range(0.2..0.45), rng.random_range(0.2..0.45), rng.random_range(0.2..0.45));
            let color = [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)];
            Gaussian3D::from_natural(center, q, scale, color, rng.random_range(0.4..0.9))
        })
        .collect();
    let scene = Scene::new(gaussians, [0.05, 0.1, 0.15]);
    let cam = CameraModel::centered(16, 16, 20.0);
    let gt = ImageBuffer::from_fn(16, 16, |_, _| [rng.random(), rng.random(), rng.random()]);
    (scene, cam, gt)
}

/// Analytic gradient of the objective and the weight map it froze.
pub fn analytic_gradient(
    scene: &Scene,
    cam: &CameraModel,
    gt: &ImageBuffer,
    cfg: &RenderConfig,
    samples: &SampleSpec,
    objective: &Objective,
) -> Result<(GradBuffer, WeightMap)> {
    let (img, tape) = render_with_tape(scene, cam, cfg, samples)?;
    let w = objective.weights(&img, gt)?;
    let d = backward_loss(&img, gt, objective, &w)?;
    Ok((backward_render(&tape, &d, scene, cam)?, w))
}

/// Fingerprint of everything whose change makes the loss non-smooth.
fn kink_signature(tape: &Tape, img: &ImageBuffer, gt: &ImageBuffer) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |v: u64| {
        h ^= v;
        h = h.wrapping_mul(0x0100_0000_01b3);
    };
    for (t, tile) in tape.tiles.iter().enumerate() {
        eat(t as u64);
        for c in &tile.contribs {
            eat(tile.list[c.slot as usize] as u64);
        }
        for r in &tile.samples {
            eat(r.state.background as u64);
        }
    }
    let sign = |v: f64| if v > 0.0 { 1 } else if v < 0.0 { 2 } else { 3 };
    for (a, b) in img.data().iter().zip(gt.data()) {
        eat(sign(a - b));
    }
    if let (Ok(gp), Ok(gg)) = (gradient_field(img), gradient_field(gt)) {
        for (a, b) in gp.dx.iter().zip(&gg.dx).chain(gp.dy.iter().zip(&gg.dy)) {
            eat(sign(a - b));
        }
    }
    h
}

/// Checks the real backward pass.
pub fn grad_check(
    scene: &Scene,
    cam: &CameraModel,
    gt: &ImageBuffer,
    cfg: &RenderConfig,
    samples: &SampleSpec,
    objective: &Objective,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let (grads, _) = analytic_gradient(scene, cam, gt, cfg, samples, objective)?;
    grad_check_with(scene, cam, gt, cfg, samples, objective, opts, &grads)
}

/// Checks a caller-supplied gradient (packed layout) against finite
/// differences.
#[allow(clippy::too_many_arguments)]
pub fn grad_check_with(
    scene: &Scene,
    cam: &CameraModel,
    gt: &ImageBuffer,
    cfg: &RenderConfig,
    samples: &SampleSpec,
    objective: &Objective,
    opts: &GradCheckOptions,
    grads: &GradBuffer,
) -> Result<GradCheckReport> {
    let (base_img, base_tape) = render_with_tape(scene, cam, cfg, samples)?;
    let weights = objective.weights(&base_img, gt)?;
    let base_sig = kink_signature(&base_tape, &base_img, gt);
    let base = pack_params(scene);

    let eval = |idx: usize, delta: f64| -> Result<(f64, u64)> {
        let mut p = base.clone();
        p.as_mut_slice()[idx] += delta;
        let s = unpack_params(&p, scene)?;
        let (img, tape) = render_with_tape(&s, cam, cfg, samples)?;
        let loss = objective.evaluate_with_weights(&img, gt, &weights)?.composite;
        Ok((loss, kink_signature(&tape, &img, gt)))
    };

    let mut entries = Vec::with_capacity(base.len());
    for idx in 0..base.len() {
        let theta = base.as_slice()[idx];
        let mut h = opts.step * theta.abs().max(1.0);
        let mut numeric = 0.0;
        let mut smooth = false;
        for _ in 0..=opts.refinements {
            let (fp, sp) = eval(idx, h)?;
            let (fm, sm) = eval(idx, -h)?;
            let (fp2, sp2) = eval(idx, 0.5 * h)?;
            let (fm2, sm2) = eval(idx, -0.5 * h)?;
            let d1 = (fp - fm) / (2.0 * h);
            let d2 = (fp2 - fm2) / h;
            numeric = (4.0 * d2 - d1) / 3.0;
            if [sp, sm, sp2, sm2].iter().all(|&s| s == base_sig) {
                smooth = true;
                break;
            }
            h *= 0.1;
        }
        let analytic = grads.params.as_slice()[idx];
        let rel_err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        let slot = idx % PARAMS_PER_GAUSSIAN;
        let field = ParamField::of_slot(slot);
        entries.push(ParamCheck {
            gaussian: idx / PARAMS_PER_GAUSSIAN,
            field,
            component: slot - field.offset(),
            analytic,
            numeric,
            rel_err,
            nonsmooth: !smooth,
        });
    }

    let classes: Vec<ClassSummary> = ParamField::ALL
        .iter()
        .map(|&field| {
            let mut summary = ClassSummary {
                field,
                max_rel_err: 0.0,
                location: None,
                checked: 0,
                flagged: 0,
                pass: true,
            };
            for e in entries.iter().filter(|e| e.field == field) {
                if e.nonsmooth {
                    summary.flagged += 1;
                    continue;
                }
                summary.checked += 1;
                if summary.location.is_none() || e.rel_err > summary.max_rel_err {
                    summary.max_rel_err = e.rel_err;
                    summary.location = Some((e.gaussian, e.component));
                }
            }
            summary.pass = summary.max_rel_err < opts.tolerance;
            summary
        })
        .collect();
    let passed = classes.iter().all(|c| c.pass);
    Ok(GradCheckReport {
        tolerance: opts.tolerance,
        entries,
        classes,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::IDENTITY_QUAT;

    fn two_blobs(opacity_logit: f64) -> Scene {
        let mut gs = vec![
            Gaussian3D::from_natural(Vector3::new(-0.2, 0.1, 4.0), IDENTITY_QUAT, Vector3::new(0.4, 0.3, 0.35), [0.8, 0.3, 0.2], 0.6),
            Gaussian3D::from_natural(Vector3::new(0.25, -0.1, 4.4), [0.9, 0.2, -0.1, 0.3], Vector3::new(0.3, 0.5, 0.3), [0.2, 0.5, 0.9], 0.7),
        ];
        for g in &mut gs {
            g.opacity_logit = g.opacity_logit.min(opacity_logit);
        }
        Scene::new(gs, [0.1, 0.1, 0.1])
    }

    fn target() -> ImageBuffer {
        ImageBuffer::from_fn(12, 12, |i, j| [(i as f64 * 0.37).sin() * 0.4 + 0.5, j as f64 / 13.0, 0.33 + 0.02 * (i + j) as f64])
    }

    #[test]
    fn default_fixture_passes_at_full_precision() {
        let (s, cam, gt) = default_fixture(7);
        let r = grad_check(&s, &cam, &gt, &RenderConfig::default(), &SampleSpec::rotated_grid4(), &Objective::default(), &GradCheckOptions::default()).unwrap();
        println!("{r}");
        assert!(r.passed, "{r}");
    }

    #[test]
    fn front_to_back_gradients_pass() {
        let (s, cam, gt) = default_fixture(3);
        let cfg = RenderConfig {
            mode: crate::raster::CompositingMode::FrontToBack,
            ..RenderConfig::default()
        };
        let r = grad_check(&s, &cam, &gt, &cfg, &SampleSpec::rotated_grid4(), &Objective::default(), &GradCheckOptions::default()).unwrap();
        assert!(r.passed, "{r}");
    }

    #[test]
    fn zero_opacity_passes_trivially() {
        let s = two_blobs(-60.0);
        let cam = CameraModel::centered(12, 12, 16.0);
        let r = grad_check(&s, &cam, &target(), &RenderConfig::default(), &SampleSpec::single(), &Objective::default(), &GradCheckOptions::default()).unwrap();
        assert!(r.passed, "{r}");
        assert!(r.entries.iter().all(|e| e.analytic == 0.0));
    }

    #[test]
    fn sign_flip_is_reported() {
        let s = two_blobs(10.0);
        let cam = CameraModel::centered(12, 12, 16.0);
        let cfg = RenderConfig::default();
        let spec = SampleSpec::rotated_grid4();
        let obj = Objective::default();
        let (mut g, _) = analytic_gradient(&s, &cam, &target(), &cfg, &spec, &obj).unwrap();
        let k = crate::scene::ParamVector::index(1, ParamField::LogScale, 1);
        g.params.as_mut_slice()[k] *= -1.0;
        let r = grad_check_with(&s, &cam, &target(), &cfg, &spec, &obj, &GradCheckOptions::default(), &g).unwrap();
        assert!(!r.passed);
        let c = r.classes.iter().find(|c| c.field == ParamField::LogScale).unwrap();
        assert!(!c.pass);
        assert_eq!(c.location, Some((1, 1)));
        assert!(r.table().contains("FAIL"));
    }
}
