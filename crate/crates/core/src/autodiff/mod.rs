//! Reverse-mode differentiation of the loss and the renderer, plus a
//! finite-difference gradient checker.
//!
//! The backward pass replays the tape recorded by
//! [`render_with_tape`](crate::raster::render_with_tape): for every
//! `(pixel, subsample)` it differentiates the blend, then the footprint
//! weight, and accumulates per-splat screen-space adjoints. Those are pushed
//! through covariance projection and the quaternion/scale maps once per
//! Gaussian. Depth order in front-to-back mode is treated as constant.

mod chain;
mod gradcheck;

use nalgebra::Vector2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::loss::{Objective, WeightMap};
use crate::raster::{pixel_center, CompositingMode, Splat2D, Tape, TileTape};
use crate::scene::{CameraModel, ParamField, ParamVector, Scene, PARAMS_PER_GAUSSIAN};

use chain::{gaussian_backward, SplatAdjoint};

pub use gradcheck::{
    analytic_gradient, default_fixture, grad_check, grad_check_with, ClassSummary, GradCheckOptions, GradCheckReport, ParamCheck,
};

/// Parameter gradients in packed layout plus the image adjoint they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct GradBuffer {
    pub params: ParamVector,
    pub d_image: Vec<f64>,
}

impl GradBuffer {
    pub fn zeros(gaussians: usize, height: usize, width: usize) -> Self {
        Self {
            params: ParamVector::zeros(gaussians),
            d_image: vec![0.0; height * width * 3],
        }
    }

    pub fn gaussians(&self) -> usize {
        self.params.gaussians()
    }

    pub fn d_center(&self, g: usize) -> &[f64] {
        self.params.field(g, ParamField::Center)
    }

    pub fn d_rotation(&self, g: usize) -> &[f64] {
        self.params.field(g, ParamField::Rotation)
    }

    pub fn d_log_scale(&self, g: usize) -> &[f64] {
        self.params.field(g, ParamField::LogScale)
    }

    pub fn d_color_logit(&self, g: usize) -> &[f64] {
        self.params.field(g, ParamField::Color)
    }

    pub fn d_opacity_logit(&self, g: usize) -> f64 {
        self.params.field(g, ParamField::Opacity)[0]
    }

    /// First parameter with a non-finite gradient, as `(gaussian, field)`.
    pub fn first_non_finite(&self) -> Option<(usize, ParamField)> {
        self.params
            .as_slice()
            .iter()
            .position(|v| !v.is_finite())
            .map(|i| (i / PARAMS_PER_GAUSSIAN, ParamField::of_slot(i % PARAMS_PER_GAUSSIAN)))
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.first_non_finite() {
            Some((gaussian, field)) => Err(Error::NonFiniteGradient {
                gaussian,
                param: field.name(),
            }),
            None => Ok(()),
        }
    }
}

/// `∂L/∂pred` of the objective with the weight map held fixed.
pub fn backward_loss(pred: &ImageBuffer, gt: &ImageBuffer, objective: &Objective, weights: &WeightMap) -> Result<Vec<f64>> {
    objective.backward(pred, gt, weights)
}

/// Footprint weight `w = exp(-½ dᵀA d)` with respect to the splat mean and
/// the inverse covariance `A`.
#[inline]
fn weight_adjoint(e: &mut SplatAdjoint, sp: &Splat2D, u: &Vector2<f64>, w: f64, d_w: f64) {
    let dx = u.x - sp.mean2d.x;
    let dy = u.y - sp.mean2d.y;
    let a = &sp.cov2d_inv;
    let gw = d_w * w;
    e.mean[0] += gw * (a[(0, 0)] * dx + a[(0, 1)] * dy);
    e.mean[1] += gw * (a[(1, 0)] * dx + a[(1, 1)] * dy);
    e.conic[0] -= 0.5 * gw * dx * dx;
    e.conic[1] -= gw * dx * dy;
    e.conic[2] -= 0.5 * gw * dy * dy;
}

fn tile_backward(tile: &TileTape, tape: &Tape, d_image: &[f64]) -> Vec<SplatAdjoint> {
    let n = tape.offsets.len();
    let inv_n = 1.0 / n as f64;
    let bg = tape.background;
    let eps = tape.cfg.denom_epsilon;
    let mut adj = vec![SplatAdjoint::default(); tile.list.len()];
    let lookup = |slot: u32| &tape.splats[tile.list[slot as usize] as usize];
    let mut colors = vec![[0.0; 3]; n];
    let mut trans = Vec::new();
    let r = tile.rect;
    let mut k = 0;
    for row in r.y0..r.y1 {
        for col in r.x0..r.x1 {
            let records = &tile.samples[k..k + n];
            k += n;
            let base = (row * tape.width + col) * 3;
            let g_pix = [d_image[base], d_image[base + 1], d_image[base + 2]];
            if g_pix == [0.0; 3] {
                continue;
            }
            // clamp after averaging passes gradient only inside [0, 1]
            let mut mean = [0.0; 3];
            for (s, rec) in records.iter().enumerate() {
                let cs = &tile.contribs[rec.start as usize..(rec.start + rec.len) as usize];
                colors[s] = crate::raster::blend_contributions(cs, lookup, &tape.cfg, bg);
                for ch in 0..3 {
                    mean[ch] += colors[s][ch];
                }
            }
            let mut g = [0.0; 3];
            for ch in 0..3 {
                let v = mean[ch] * inv_n;
                if (0.0..=1.0).contains(&v) {
                    g[ch] = g_pix[ch] * inv_n;
                }
            }
            if g == [0.0; 3] {
                continue;
            }
            let center = pixel_center(row, col);
            for (s, rec) in records.iter().enumerate() {
                if rec.state.background && tape.cfg.mode == CompositingMode::Normalized {
                    continue;
                }
                let cs = &tile.contribs[rec.start as usize..(rec.start + rec.len) as usize];
                let u = center + tape.offsets[s];
                match tape.cfg.mode {
                    CompositingMode::Normalized => {
                        let d = rec.state.denominator + eps;
                        let c = colors[s];
                        for ct in cs {
                            let sp = lookup(ct.slot);
                            let a = sp.opacity * ct.weight;
                            let mut d_a = 0.0;
                            {
                                let e = &mut adj[ct.slot as usize];
                                for ch in 0..3 {
                                    e.color[ch] += g[ch] * a / d;
                                    d_a += g[ch] * (sp.color[ch] - c[ch]) / d;
                                }
                                e.opacity += d_a * ct.weight;
                            }
                            weight_adjoint(&mut adj[ct.slot as usize], sp, &u, ct.weight, d_a * sp.opacity);
                        }
                    }
                    CompositingMode::FrontToBack => {
                        trans.clear();
                        let mut t = 1.0;
                        for ct in cs {
                            trans.push(t);
                            t *= 1.0 - lookup(ct.slot).opacity * ct.weight;
                        }
                        // color of everything behind the current splat, per unit transmittance
                        let mut rest = bg;
                        for (ct, &t_n) in cs.iter().zip(&trans).rev() {
                            let sp = lookup(ct.slot);
                            let a = sp.opacity * ct.weight;
                            let mut d_a = 0.0;
                            {
                                let e = &mut adj[ct.slot as usize];
                                for ch in 0..3 {
                                    e.color[ch] += g[ch] * a * t_n;
                                    d_a += g[ch] * t_n * (sp.color[ch] - rest[ch]);
                                }
                                e.opacity += d_a * ct.weight;
                            }
                            weight_adjoint(&mut adj[ct.slot as usize], sp, &u, ct.weight, d_a * sp.opacity);
                            for ch in 0..3 {
                                rest[ch] = sp.color[ch] * a + (1.0 - a) * rest[ch];
                            }
                        }
                    }
                }
            }
        }
    }
    adj
}

fn merge_into(acc: &mut [SplatAdjoint], tile: &TileTape, partial: &[SplatAdjoint]) {
    for (&k, p) in tile.list.iter().zip(partial) {
        acc[k as usize].add(p);
    }
}

/// Parameter gradients for the image adjoint `d_image` of the render that
/// produced `tape`.
pub fn backward_render(tape: &Tape, d_image: &[f64], scene: &Scene, cam: &CameraModel) -> Result<GradBuffer> {
    tape.check_scene(scene)?;
    if cam.width != tape.width || cam.height != tape.height {
        return Err(Error::TapeMismatch(format!(
            "camera is {}x{}, tape is {}x{}",
            cam.width, cam.height, tape.width, tape.height
        )));
    }
    if d_image.len() != tape.width * tape.height * 3 {
        return Err(Error::Shape(format!(
            "image adjoint has {} entries, expected {}",
            d_image.len(),
            tape.width * tape.height * 3
        )));
    }
    let nsplat = tape.splats.len();
    let adjoints = if tape.cfg.deterministic {
        let partials: Vec<Vec<SplatAdjoint>> = tape.tiles.par_iter().map(|t| tile_backward(t, tape, d_image)).collect();
        let mut acc = vec![SplatAdjoint::default(); nsplat];
        for (tile, p) in tape.tiles.iter().zip(&partials) {
            merge_into(&mut acc, tile, p);
        }
        acc
    } else {
        tape.tiles
            .par_iter()
            .fold(
                || vec![SplatAdjoint::default(); nsplat],
                |mut acc, tile| {
                    merge_into(&mut acc, tile, &tile_backward(tile, tape, d_image));
                    acc
                },
            )
            .reduce(
                || vec![SplatAdjoint::default(); nsplat],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(&b) {
                        x.add(y);
                    }
                    a
                },
            )
    };

    let mut grads = GradBuffer {
        params: ParamVector::zeros(scene.len()),
        d_image: d_image.to_vec(),
    };
    let blocks: Vec<(usize, [f64; PARAMS_PER_GAUSSIAN])> = tape
        .splats
        .par_iter()
        .zip(&adjoints)
        .map(|(sp, adj)| {
            let mut block = [0.0; PARAMS_PER_GAUSSIAN];
            if *adj != SplatAdjoint::default() {
                gaussian_backward(&scene.gaussians[sp.source_index], sp, cam, adj, &mut block);
            }
            (sp.source_index, block)
        })
        .collect();
    let out = grads.params.as_mut_slice();
    for (g, block) in blocks {
        out[g * PARAMS_PER_GAUSSIAN..(g + 1) * PARAMS_PER_GAUSSIAN].copy_from_slice(&block);
    }
    Ok(grads)
}
