//! Windowed SSIM with an 11×11 Gaussian window (σ = 1.5), evaluated over
//! the valid region only (every window fully inside the image).

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
pub fn kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let half = (WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

fn check(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<()> {
    pred.check_shape(gt)?;
    if pred.height() < WINDOW || pred.width() < WINDOW {
        return Err(Error::ImageTooSmall(format!(
            "SSIM needs at least {WINDOW}x{WINDOW}, got {}x{}",
            pred.height(),
            pred.width()
        )));
    }
    Ok(())
}

/// One color channel as a dense plane.
fn plane(img: &ImageBuffer, ch: usize) -> Vec<f64> {
    img.data().iter().skip(ch).step_by(3).copied().collect()
}

/// Valid-region separable filtering of an `h × w` plane.
fn filter_valid(src: &[f64], h: usize, w: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let wv = w - WINDOW + 1;
    let hv = h - WINDOW + 1;
    let mut tmp = vec![0.0; h * wv];
    for i in 0..h {
        let row = &src[i * w..(i + 1) * w];
        for j in 0..wv {
            let mut s = 0.0;
            for (t, kt) in k.iter().enumerate() {
                s += kt * row[j + t];
            }
            tmp[i * wv + j] = s;
        }
    }
    let mut out = vec![0.0; hv * wv];
    for i in 0..hv {
        for j in 0..wv {
            let mut s = 0.0;
            for (t, kt) in k.iter().enumerate() {
                s += kt * tmp[(i + t) * wv + j];
            }
            out[i * wv + j] = s;
        }
    }
    out
}

/// Transpose of [`filter_valid`]: scatters an `hv × wv` map back to `h × w`.
fn filter_valid_adjoint(g: &[f64], h: usize, w: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let wv = w - WINDOW + 1;
    let hv = h - WINDOW + 1;
    let mut tmp = vec![0.0; h * wv];
    for i in 0..hv {
        for j in 0..wv {
            let v = g[i * wv + j];
            for (t, kt) in k.iter().enumerate() {
                tmp[(i + t) * wv + j] += kt * v;
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..wv {
            let v = tmp[i * wv + j];
            for (t, kt) in k.iter().enumerate() {
                out[i * w + j + t] += kt * v;
            }
        }
    }
    out
}

struct ChannelStats {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    var_x: Vec<f64>,
    var_y: Vec<f64>,
    cov_xy: Vec<f64>,
}

fn channel_stats(x: &[f64], y: &[f64], h: usize, w: usize, k: &[f64; WINDOW]) -> ChannelStats {
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mu_x = filter_valid(x, h, w, k);
    let mu_y = filter_valid(y, h, w, k);
    let exx = filter_valid(&xx, h, w, k);
    let eyy = filter_valid(&yy, h, w, k);
    let exy = filter_valid(&xy, h, w, k);
    let n = mu_x.len();
    let mut var_x = Vec::with_capacity(n);
    let mut var_y = Vec::with_capacity(n);
    let mut cov_xy = Vec::with_capacity(n);
    for p in 0..n {
        var_x.push(exx[p] - mu_x[p] * mu_x[p]);
        var_y.push(eyy[p] - mu_y[p] * mu_y[p]);
        cov_xy.push(exy[p] - mu_x[p] * mu_y[p]);
    }
    ChannelStats {
        mu_x,
        mu_y,
        var_x,
        var_y,
        cov_xy,
    }
}

#[inline]
fn ssim_terms(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64) -> (f64, f64, f64, f64) {
    let a = 2.0 * mx * my + C1;
    let b = 2.0 * cxy + C2;
    let c = mx * mx + my * my + C1;
    let d = vx + vy + C2;
    (a, b, c, d)
}

/// Mean SSIM over all valid window positions and the three channels.
pub fn mean_ssim(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
    check(pred, gt)?;
    let (h, w) = (pred.height(), pred.width());
    let k = kernel();
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..3 {
        let st = channel_stats(&plane(pred, ch), &plane(gt, ch), h, w, &k);
        for p in 0..st.mu_x.len() {
            let (a, b, c, d) = ssim_terms(st.mu_x[p], st.mu_y[p], st.var_x[p], st.var_y[p], st.cov_xy[p]);
            total += (a * b) / (c * d);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// `(1 - mean SSIM) / 2`.
pub fn dssim(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
    Ok((1.0 - mean_ssim(pred, gt)?) / 2.0)
}

/// Adds `scale · ∂dssim/∂pred` into `out` (image layout).
pub fn dssim_backward(pred: &ImageBuffer, gt: &ImageBuffer, scale: f64, out: &mut [f64]) -> Result<()> {
    check(pred, gt)?;
    let (h, w) = (pred.height(), pred.width());
    let k = kernel();
    let nv = (h - WINDOW + 1) * (w - WINDOW + 1);
    // d(dssim)/dS at each window is -1/(2·count)
    let ds = -scale / (2.0 * (3 * nv) as f64);
    for ch in 0..3 {
        let x = plane(pred, ch);
        let y = plane(gt, ch);
        // identical channels sit at the SSIM maximum where the gradient vanishes
        if x == y {
            continue;
        }
        let st = channel_stats(&x, &y, h, w, &k);
        let mut g_m1 = vec![0.0; nv];
        let mut g_m2 = vec![0.0; nv];
        let mut g_mxy = vec![0.0; nv];
        for p in 0..nv {
            let (mx, my) = (st.mu_x[p], st.mu_y[p]);
            let (a, b, c, d) = ssim_terms(mx, my, st.var_x[p], st.var_y[p], st.cov_xy[p]);
            let s = (a * b) / (c * d);
            let d_mu = 2.0 * my * b / (c * d) - s * 2.0 * mx / c;
            let d_var = -s / d;
            let d_cov = 2.0 * a / (c * d);
            // raw moments: var = E[x²] - μx², cov = E[xy] - μx μy
            g_m1[p] = ds * (d_mu - 2.0 * mx * d_var - my * d_cov);
            g_m2[p] = ds * d_var;
            g_mxy[p] = ds * d_cov;
        }
        let b1 = filter_valid_adjoint(&g_m1, h, w, &k);
        let b2 = filter_valid_adjoint(&g_m2, h, w, &k);
        let b3 = filter_valid_adjoint(&g_mxy, h, w, &k);
        for q in 0..h * w {
            out[q * 3 + ch] += b1[q] + 2.0 * x[q] * b2[q] + y[q] * b3[q];
        }
    }
    Ok(())
}
