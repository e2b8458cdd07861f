//! Image quality metrics and visual diagnostics.

mod wavelet;

use crate::error::Result;
use crate::image::ImageBuffer;

pub use crate::loss::mean_ssim as ssim;
pub use wavelet::{haar_dwt, haar_idwt, normalize_band, write_subbands, Subband, WaveletDecomposition};

/// Reported for identical images so tables stay finite.
pub const PSNR_CAP: f64 = 99.0;

pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.check_shape(b)?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.data().len() as f64)
}

/// `10·log10(1/MSE)` for images on `[0, 1]`, capped at [`PSNR_CAP`].
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((-10.0 * m.log10()).min(PSNR_CAP))
}

/// Grayscale agreement map: 1 where the images match, 0 where every channel
/// is off by one.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl DiffMap {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn to_image(&self) -> ImageBuffer {
        ImageBuffer::from_fn(self.height, self.width, |i, j| [self.at(i, j); 3])
    }
}

/// `1 − mean_c |pred − gt|`, clamped to `[0, 1]`.
pub fn diff_map(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<DiffMap> {
    pred.check_shape(gt)?;
    let values = pred
        .data()
        .chunks_exact(3)
        .zip(gt.data().chunks_exact(3))
        .map(|(p, g)| {
            let e = ((p[0] - g[0]).abs() + (p[1] - g[1]).abs() + (p[2] - g[2]).abs()) / 3.0;
            (1.0 - e).clamp(0.0, 1.0)
        })
        .collect();
    Ok(DiffMap {
        height: pred.height(),
        width: pred.width(),
        values,
    })
}
