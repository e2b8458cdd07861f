//! Training objective: error-adaptive weighted L1, D-SSIM and the
//! gradient-difference term, combined as
//! `λ₁·L_w + λ₂·L_D-SSIM + λ₃·L_grad`.
//!
//! Every loss has a matching `*_backward` that adds its gradient with
//! respect to the predicted image into a buffer in image layout. The
//! adaptive weight map is treated as a constant there.

pub mod instrumentation;
mod ssim;

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

pub use ssim::{dssim, dssim_backward, kernel as ssim_kernel, mean_ssim, C1, C2, SIGMA as SSIM_SIGMA, WINDOW as SSIM_WINDOW};

pub const DEFAULT_LAMBDA1: f64 = 0.8;
pub const DEFAULT_LAMBDA2: f64 = 0.2;
pub const DEFAULT_LAMBDA3: f64 = 0.1;
pub const DEFAULT_ALPHA_FLOOR: f64 = 0.2;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Dense `height × width` scalar grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl Grid {
    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Per-pixel L1 error summed over color channels.
pub fn pixel_error(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<Grid> {
    pred.check_shape(gt)?;
    let values = pred
        .data()
        .chunks_exact(3)
        .zip(gt.data().chunks_exact(3))
        .map(|(p, g)| (p[0] - g[0]).abs() + (p[1] - g[1]).abs() + (p[2] - g[2]).abs())
        .collect();
    Ok(Grid {
        height: pred.height(),
        width: pred.width(),
        values,
    })
}

/// `w = α + (1-α)·e / (max e + ε)`, normalized by the image-wide maximum.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMap {
    pub grid: Grid,
    pub alpha_floor: f64,
    pub epsilon: f64,
}

impl WeightMap {
    /// All-ones map: turns the weighted L1 into the plain mean L1.
    pub fn uniform(height: usize, width: usize) -> Self {
        Self {
            grid: Grid {
                height,
                width,
                values: vec![1.0; height * width],
            },
            alpha_floor: 1.0,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

pub fn weight_map(e: &Grid, alpha_floor: f64, epsilon: f64) -> Result<WeightMap> {
    if !(0.0..=1.0).contains(&alpha_floor) {
        return Err(Error::Config(format!("alpha floor {alpha_floor} is outside [0, 1]")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Config("weight map epsilon must be positive".into()));
    }
    instrumentation::bump_weight_map();
    let denom = e.max() + epsilon;
    let values = e
        .values
        .iter()
        .map(|&v| alpha_floor + (1.0 - alpha_floor) * v / denom)
        .collect();
    Ok(WeightMap {
        grid: Grid {
            height: e.height,
            width: e.width,
            values,
        },
        alpha_floor,
        epsilon,
    })
}

fn check_weights(pred: &ImageBuffer, w: &WeightMap) -> Result<()> {
    if w.grid.height != pred.height() || w.grid.width != pred.width() {
        return Err(Error::Shape(format!(
            "weight map {}x{} vs image {}x{}",
            w.grid.height,
            w.grid.width,
            pred.height(),
            pred.width()
        )));
    }
    Ok(())
}

/// `(1/HW) Σ w_ij ‖pred_ij − gt_ij‖₁`.
pub fn weighted_l1(pred: &ImageBuffer, gt: &ImageBuffer, w: &WeightMap) -> Result<f64> {
    pred.check_shape(gt)?;
    check_weights(pred, w)?;
    let sum: f64 = pred
        .data()
        .chunks_exact(3)
        .zip(gt.data().chunks_exact(3))
        .zip(&w.grid.values)
        .map(|((p, g), wt)| wt * ((p[0] - g[0]).abs() + (p[1] - g[1]).abs() + (p[2] - g[2]).abs()))
        .sum();
    Ok(sum / pred.pixels() as f64)
}

/// Plain per-pixel L1 (channel-summed) averaged over pixels.
pub fn mean_l1(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
    weighted_l1(pred, gt, &WeightMap::uniform(pred.height(), pred.width()))
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Adds `scale · ∂L_w/∂pred` with the weights held fixed.
pub fn weighted_l1_backward(
    pred: &ImageBuffer,
    gt: &ImageBuffer,
    w: &WeightMap,
    scale: f64,
    out: &mut [f64],
) -> Result<()> {
    pred.check_shape(gt)?;
    check_weights(pred, w)?;
    let k = scale / pred.pixels() as f64;
    for (idx, (p, g)) in pred.data().iter().zip(gt.data()).enumerate() {
        out[idx] += k * w.grid.values[idx / 3] * sign(p - g);
    }
    Ok(())
}

/// Horizontal and vertical forward differences per channel over the
/// `(H-1) × (W-1)` sites that have both a right and a lower neighbor.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    pub height: usize,
    pub width: usize,
    /// `I(i, j+1) − I(i, j)`, layout `((i·(W-1) + j)·3 + c)`.
    pub dx: Vec<f64>,
    /// `I(i+1, j) − I(i, j)`, same layout.
    pub dy: Vec<f64>,
}

impl GradientField {
    #[inline]
    pub fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * (self.width - 1) + col) * 3 + ch
    }
}

fn check_gradient_size(img: &ImageBuffer) -> Result<()> {
    if img.height() < 2 || img.width() < 2 {
        return Err(Error::ImageTooSmall(format!(
            "forward differences need at least 2x2, got {}x{}",
            img.height(),
            img.width()
        )));
    }
    Ok(())
}

pub fn gradient_field(img: &ImageBuffer) -> Result<GradientField> {
    check_gradient_size(img)?;
    let (h, w) = (img.height(), img.width());
    let n = (h - 1) * (w - 1) * 3;
    let mut dx = Vec::with_capacity(n);
    let mut dy = Vec::with_capacity(n);
    for i in 0..h - 1 {
        for j in 0..w - 1 {
            for c in 0..3 {
                let v = img.at(i, j, c);
                dx.push(img.at(i, j + 1, c) - v);
                dy.push(img.at(i + 1, j, c) - v);
            }
        }
    }
    Ok(GradientField {
        height: h,
        width: w,
        dx,
        dy,
    })
}

/// `(1/((H-1)(W-1))) Σ ‖G_pred − G_gt‖₁` summed over both directions and
/// all channels.
pub fn gdc_loss(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
    pred.check_shape(gt)?;
    instrumentation::bump_gdc();
    let gp = gradient_field(pred)?;
    let gg = gradient_field(gt)?;
    let sum: f64 = gp
        .dx
        .iter()
        .zip(&gg.dx)
        .zip(gp.dy.iter().zip(&gg.dy))
        .map(|((a, b), (c, d))| (a - b).abs() + (c - d).abs())
        .sum();
    Ok(sum / ((pred.height() - 1) * (pred.width() - 1)) as f64)
}

/// Adds `scale · ∂L_grad/∂pred`: the transposed difference stencil.
pub fn gdc_backward(pred: &ImageBuffer, gt: &ImageBuffer, scale: f64, out: &mut [f64]) -> Result<()> {
    pred.check_shape(gt)?;
    let gp = gradient_field(pred)?;
    let gg = gradient_field(gt)?;
    let (h, w) = (pred.height(), pred.width());
    let k = scale / ((h - 1) * (w - 1)) as f64;
    for i in 0..h - 1 {
        for j in 0..w - 1 {
            for c in 0..3 {
                let f = gp.index(i, j, c);
                let sx = k * sign(gp.dx[f] - gg.dx[f]);
                let sy = k * sign(gp.dy[f] - gg.dy[f]);
                out[pred.index(i, j + 1, c)] += sx;
                out[pred.index(i + 1, j, c)] += sy;
                out[pred.index(i, j, c)] -= sx + sy;
            }
        }
    }
    Ok(())
}

/// Per-term loss values and the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub weighted_l1: f64,
    pub dssim: f64,
    pub grad: f64,
    pub composite: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl LossBreakdown {
    pub fn new(weighted_l1: f64, dssim: f64, grad: f64, lambda1: f64, lambda2: f64, lambda3: f64) -> Self {
        Self {
            weighted_l1,
            dssim,
            grad,
            composite: lambda1 * weighted_l1 + lambda2 * dssim + lambda3 * grad,
            lambda1,
            lambda2,
            lambda3,
        }
    }

    pub const CSV_HEADER: &'static str = "iteration,weighted_l1,dssim,grad,composite";

    pub fn csv_row(&self, iteration: usize) -> String {
        let mut s = String::new();
        write!(
            s,
            "{iteration},{},{},{},{}",
            self.weighted_l1, self.dssim, self.grad, self.composite
        )
        .unwrap();
        s
    }
}

/// Full objective with the adaptive weight map and the gradient term.
pub fn composite_loss(
    pred: &ImageBuffer,
    gt: &ImageBuffer,
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
    alpha_floor: f64,
    epsilon: f64,
) -> Result<LossBreakdown> {
    let obj = Objective {
        lambda1,
        lambda2,
        lambda3,
        adaptive_weights: true,
        gradient_term: true,
        alpha_floor,
        epsilon,
    };
    Ok(obj.evaluate(pred, gt)?.0)
}

/// Which terms are active and with what coefficients.
///
/// With `adaptive_weights` off the first term is the plain mean L1; with
/// `gradient_term` off the gradient-difference loss is never evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Objective {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub adaptive_weights: bool,
    pub gradient_term: bool,
    pub alpha_floor: f64,
    pub epsilon: f64,
}

impl Default for Objective {
    fn default() -> Self {
        Self {
            lambda1: DEFAULT_LAMBDA1,
            lambda2: DEFAULT_LAMBDA2,
            lambda3: DEFAULT_LAMBDA3,
            adaptive_weights: true,
            gradient_term: true,
            alpha_floor: DEFAULT_ALPHA_FLOOR,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl Objective {
    /// Plain `0.8·L1 + 0.2·D-SSIM`.
    pub fn baseline() -> Self {
        Self {
            lambda3: 0.0,
            adaptive_weights: false,
            gradient_term: false,
            ..Self::default()
        }
    }

    /// Weight map for this pair: adaptive, or uniform when disabled.
    pub fn weights(&self, pred: &ImageBuffer, gt: &ImageBuffer) -> Result<WeightMap> {
        if self.adaptive_weights {
            weight_map(&pixel_error(pred, gt)?, self.alpha_floor, self.epsilon)
        } else {
            Ok(WeightMap::uniform(pred.height(), pred.width()))
        }
    }

    /// Evaluates every active term; returns the weight map used.
    pub fn evaluate(&self, pred: &ImageBuffer, gt: &ImageBuffer) -> Result<(LossBreakdown, WeightMap)> {
        let w = self.weights(pred, gt)?;
        Ok((self.evaluate_with_weights(pred, gt, &w)?, w))
    }

    /// Evaluates with a caller-supplied (frozen) weight map.
    pub fn evaluate_with_weights(&self, pred: &ImageBuffer, gt: &ImageBuffer, w: &WeightMap) -> Result<LossBreakdown> {
        let l1 = weighted_l1(pred, gt, w)?;
        let ds = if self.lambda2 != 0.0 { dssim(pred, gt)? } else { 0.0 };
        let gr = if self.gradient_term { gdc_loss(pred, gt)? } else { 0.0 };
        let lambda3 = if self.gradient_term { self.lambda3 } else { 0.0 };
        Ok(LossBreakdown::new(l1, ds, gr, self.lambda1, self.lambda2, lambda3))
    }

    /// `∂L/∂pred` with the weight map held fixed.
    pub fn backward(&self, pred: &ImageBuffer, gt: &ImageBuffer, w: &WeightMap) -> Result<Vec<f64>> {
        let mut out = vec![0.0; pred.data().len()];
        weighted_l1_backward(pred, gt, w, self.lambda1, &mut out)?;
        if self.lambda2 != 0.0 {
            dssim_backward(pred, gt, self.lambda2, &mut out)?;
        }
        if self.gradient_term && self.lambda3 != 0.0 {
            gdc_backward(pred, gt, self.lambda3, &mut out)?;
        }
        Ok(out)
    }
}
