use nalgebra::{Matrix2, Matrix2x3, Vector2, Vector3};

use super::RenderConfig;
use crate::scene::{covariance_of, CameraModel, Gaussian3D};

/// Pixel position and camera-space depth of a projected point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectedPoint {
    pub pixel: Vector2<f64>,
    pub depth: f64,
}

/// Pinhole projection of a world point. `None` when the camera-space depth
/// does not exceed the near clip.
pub fn project_point(x: &Vector3<f64>, cam: &CameraModel) -> Option<ProjectedPoint> {
    let c = cam.to_camera(x);
    if c.z <= cam.near_clip {
        return None;
    }
    Some(ProjectedPoint {
        pixel: Vector2::new(cam.fx * c.x / c.z + cam.cx, cam.fy * c.y / c.z + cam.cy),
        depth: c.z,
    })
}

/// Perspective Jacobian `∂(px, py)/∂(x, y, z)` at camera-space point `c`.
pub fn perspective_jacobian(c: &Vector3<f64>, cam: &CameraModel) -> Matrix2x3<f64> {
    let iz = 1.0 / c.z;
    Matrix2x3::new(
        cam.fx * iz,
        0.0,
        -cam.fx * c.x * iz * iz,
        0.0,
        cam.fy * iz,
        -cam.fy * c.y * iz * iz,
    )
}

/// Screen-space covariance `J W Σ Wᵀ Jᵀ + blur·I` (first-order EWA).
/// `None` when the Gaussian center is clipped.
pub fn project_covariance(g: &Gaussian3D, cam: &CameraModel, blur: f64) -> Option<Matrix2<f64>> {
    let c = cam.to_camera(&g.center);
    if c.z <= cam.near_clip {
        return None;
    }
    let t = perspective_jacobian(&c, cam) * cam.rotation;
    Some(t * covariance_of(g) * t.transpose() + Matrix2::identity() * blur)
}

/// Inclusive-exclusive integer pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }

    #[inline]
    pub fn contains(&self, col: usize, row: usize) -> bool {
        col >= self.x0 && col < self.x1 && row >= self.y0 && row < self.y1
    }

    pub fn intersects(&self, other: &PixelRect) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1 && self.y0 < other.y1 && other.y0 < self.y1
    }
}

/// A Gaussian's elliptical image-plane footprint.
#[derive(Clone, Debug, PartialEq)]
pub struct Splat2D {
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    pub cov2d_inv: Matrix2<f64>,
    pub depth: f64,
    pub bbox: PixelRect,
    pub source_index: usize,
    pub opacity: f64,
    pub color: [f64; 3],
}

/// Number of standard deviations the screen bounding box spans.
///
/// Never smaller than the radius at which the footprint weight falls to the
/// cutoff, so every sample outside the box is below the cutoff and the
/// image depends on the cutoff alone.
pub fn bbox_sigmas(cfg: &RenderConfig) -> f64 {
    if cfg.weight_cutoff > 0.0 {
        cfg.bbox_sigmas.max((-2.0 * cfg.weight_cutoff.ln()).sqrt())
    } else {
        cfg.bbox_sigmas
    }
}

/// Pixels whose subpixel samples (which lie in `[col, col+1) × [row, row+1)`)
/// can land within `k` standard deviations of `mean`.
pub fn footprint_rect(mean: &Vector2<f64>, cov: &Matrix2<f64>, k: f64, width: usize, height: usize) -> PixelRect {
    let rx = k * cov[(0, 0)].sqrt();
    let ry = k * cov[(1, 1)].sqrt();
    let clamp = |lo: f64, hi: f64, n: usize| -> (usize, usize) {
        let lo = lo.floor();
        let hi = hi.floor() + 1.0;
        let a = lo.max(0.0).min(n as f64) as usize;
        let b = hi.max(0.0).min(n as f64) as usize;
        (a, b)
    };
    let (x0, x1) = clamp(mean.x - rx, mean.x + rx, width);
    let (y0, y1) = clamp(mean.y - ry, mean.y + ry, height);
    PixelRect { x0, y0, x1, y1 }
}

/// Projects one Gaussian; `None` if it is behind the near clip, has a
/// degenerate footprint or falls entirely outside the image.
pub fn project_gaussian(
    g: &Gaussian3D,
    source_index: usize,
    cam: &CameraModel,
    cfg: &RenderConfig,
) -> Option<Splat2D> {
    let p = project_point(&g.center, cam)?;
    let cov = project_covariance(g, cam, cfg.blur)?;
    let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
    if !(det > 0.0) || !p.pixel.iter().all(|v| v.is_finite()) {
        return None;
    }
    let inv = Matrix2::new(cov[(1, 1)], -cov[(0, 1)], -cov[(1, 0)], cov[(0, 0)]) / det;
    let bbox = footprint_rect(&p.pixel, &cov, bbox_sigmas(cfg), cam.width, cam.height);
    if bbox.is_empty() {
        return None;
    }
    let c = g.color();
    Some(Splat2D {
        mean2d: p.pixel,
        cov2d: cov,
        cov2d_inv: inv,
        depth: p.depth,
        bbox,
        source_index,
        opacity: g.opacity(),
        color: [c.x, c.y, c.z],
    })
}
