//! Differentiable 3D Gaussian splatting on the CPU.
//!
//! The crate renders scenes of anisotropic 3D Gaussians with a tiled
//! rasterizer that evaluates several subpixel samples per pixel, scores the
//! result with an error-adaptive L1 term, D-SSIM and a gradient-difference
//! term, and back-propagates analytically to every Gaussian parameter so a
//! scene can be fitted to target images with Adam.
//!
//! Module map:
//!
//! * [`scene`]: Gaussians, cameras, parameter packing and the text formats.
//! * [`raster`]: projection, footprint weights, compositing and MSAA render.
//! * [`loss`]: weight map, weighted L1, D-SSIM, gradient difference, composite.
//! * [`autodiff`]: reverse-mode pass through losses and renderer, gradient check.
//! * [`train`]: Adam, synthetic targets, the training loop and ablation harness.
//! * [`diagnostics`]: PSNR/SSIM, difference maps and the Haar wavelet view.
//! * [`cli`]: the `splat` command line.

// NaN must fail range checks, so `!(x > 0.0)` is intended.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod autodiff;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod image;
pub mod loss;
pub mod raster;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
pub use image::ImageBuffer;

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
