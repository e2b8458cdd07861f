//! Per-Gaussian chain rule from screen-space splat adjoints back to the
//! packed 3D parameters.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use crate::raster::{perspective_jacobian, Splat2D};
use crate::scene::{normalize_quat, quat_norm, CameraModel, Gaussian3D, ParamField, PARAMS_PER_GAUSSIAN};

/// Accumulated adjoints of one splat's screen-space quantities.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct SplatAdjoint {
    pub mean: [f64; 2],
    /// `∂L/∂A` for the inverse covariance `A`: `[xx, xy (both entries), yy]`.
    pub conic: [f64; 3],
    pub color: [f64; 3],
    pub opacity: f64,
}

impl SplatAdjoint {
    pub fn add(&mut self, o: &SplatAdjoint) {
        for i in 0..2 {
            self.mean[i] += o.mean[i];
        }
        for i in 0..3 {
            self.conic[i] += o.conic[i];
            self.color[i] += o.color[i];
        }
        self.opacity += o.opacity;
    }
}

/// `∂R/∂q̂` contracted with `dr`, for the unit quaternion `[w, x, y, z]`.
fn rotation_vjp(q: [f64; 4], dr: &Matrix3<f64>) -> [f64; 4] {
    let [w, x, y, z] = q;
    let g = |i, j| dr[(i, j)];
    [
        2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1)),
        2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) + w * g(2, 1)
            - 2.0 * x * g(2, 2)),
        2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) + z * g(2, 1)
            - 2.0 * y * g(2, 2)),
        2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1) + y * g(1, 2)
            + x * g(2, 0)
            + y * g(2, 1)),
    ]
}

/// Writes `∂L/∂θ` for one Gaussian into `out` (one packed block).
pub(crate) fn gaussian_backward(
    g: &Gaussian3D,
    splat: &Splat2D,
    cam: &CameraModel,
    adj: &SplatAdjoint,
    out: &mut [f64],
) {
    debug_assert_eq!(out.len(), PARAMS_PER_GAUSSIAN);

    // color and opacity through their sigmoids
    let color = g.color();
    for ch in 0..3 {
        out[ParamField::Color.offset() + ch] = adj.color[ch] * color[ch] * (1.0 - color[ch]);
    }
    let o = splat.opacity;
    out[ParamField::Opacity.offset()] = adj.opacity * o * (1.0 - o);

    // inverse covariance -> screen covariance: dΣ₂ = -A Ḡ A
    let a = &splat.cov2d_inv;
    let g_conic = Matrix2::new(adj.conic[0], 0.5 * adj.conic[1], 0.5 * adj.conic[1], adj.conic[2]);
    let g_cov2 = -(a * g_conic * a);

    // Σ₂ = T Σ Tᵀ + blur·I with T = J W
    let c = cam.to_camera(&g.center);
    let jac = perspective_jacobian(&c, cam);
    let t = jac * cam.rotation;
    let sigma = g.covariance();
    let g_sigma = t.transpose() * g_cov2 * t;
    let g_t: Matrix2x3<f64> = 2.0 * g_cov2 * t * sigma;
    let g_j = g_t * cam.rotation.transpose();

    // camera-space point: mean projection plus the Jacobian's own dependence
    let d_mean = Vector2::new(adj.mean[0], adj.mean[1]);
    let mut d_c: Vector3<f64> = jac.transpose() * d_mean;
    let iz = 1.0 / c.z;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    d_c.x += g_j[(0, 2)] * (-cam.fx * iz2);
    d_c.y += g_j[(1, 2)] * (-cam.fy * iz2);
    d_c.z += g_j[(0, 0)] * (-cam.fx * iz2)
        + g_j[(0, 2)] * (2.0 * cam.fx * c.x * iz3)
        + g_j[(1, 1)] * (-cam.fy * iz2)
        + g_j[(1, 2)] * (2.0 * cam.fy * c.y * iz3);
    let d_center = cam.rotation.transpose() * d_c;
    out[ParamField::Center.offset()..ParamField::Center.offset() + 3].copy_from_slice(d_center.as_slice());

    // Σ = M Mᵀ with M = R·diag(s)
    let q = normalize_quat(g.rotation);
    let r = g.rotation_matrix();
    let s = g.scale();
    let m = r * Matrix3::from_diagonal(&s);
    let g_m = 2.0 * g_sigma * m;
    let mut g_r = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            g_r[(i, j)] = g_m[(i, j)] * s[j];
        }
    }
    for j in 0..3 {
        let d_s: f64 = (0..3).map(|i| g_m[(i, j)] * r[(i, j)]).sum();
        out[ParamField::LogScale.offset() + j] = d_s * s[j];
    }

    // through q̂ = q/|q|: tangent projection scaled by 1/|q|
    let d_qhat = rotation_vjp(q, &g_r);
    let dot: f64 = (0..4).map(|k| q[k] * d_qhat[k]).sum();
    let inv_norm = 1.0 / quat_norm(g.rotation);
    for k in 0..4 {
        out[ParamField::Rotation.offset() + k] = (d_qhat[k] - q[k] * dot) * inv_norm;
    }
}
