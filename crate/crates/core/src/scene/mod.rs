//! Scene primitives: anisotropic Gaussians, pinhole cameras and the packed
//! parameter vector the optimizer works on.

mod camera;
mod io;
mod params;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::{logit, sigmoid};

pub use camera::CameraModel;
pub use io::{
    load_camera, load_scene, parse_camera, parse_scene, save_camera, save_scene, write_camera,
    write_scene,
};
pub use params::{pack_params, unpack_params, ParamField, ParamVector, PARAMS_PER_GAUSSIAN};

/// Quaternion stored as `[w, x, y, z]`.
pub type Quat = [f64; 4];

pub const IDENTITY_QUAT: Quat = [1.0, 0.0, 0.0, 0.0];

/// One anisotropic 3D Gaussian in its optimizer parameterization.
///
/// Scale lives in the log domain and color/opacity as logits, so every
/// unconstrained parameter value maps to a valid primitive.
#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian3D {
    pub center: Vector3<f64>,
    /// Rotation quaternion `[w, x, y, z]`, kept at unit norm.
    pub rotation: Quat,
    pub log_scale: Vector3<f64>,
    pub color_logit: Vector3<f64>,
    pub opacity_logit: f64,
}

impl Gaussian3D {
    /// Builds a Gaussian from natural-domain values: per-axis standard
    /// deviations, RGB color in `(0, 1)` and opacity in `(0, 1)`.
    pub fn from_natural(
        center: Vector3<f64>,
        rotation: Quat,
        scale: Vector3<f64>,
        color: [f64; 3],
        opacity: f64,
    ) -> Self {
        Self {
            center,
            rotation: normalize_quat(rotation),
            log_scale: scale.map(f64::ln),
            color_logit: Vector3::new(logit(color[0]), logit(color[1]), logit(color[2])),
            opacity_logit: logit(opacity),
        }
    }

    pub fn scale(&self) -> Vector3<f64> {
        self.log_scale.map(f64::exp)
    }

    pub fn color(&self) -> Vector3<f64> {
        self.color_logit.map(sigmoid)
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        rotation_matrix(self.rotation)
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        covariance_of(self)
    }

    pub fn is_finite(&self) -> bool {
        self.center.iter().all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.log_scale.iter().all(|v| v.is_finite())
            && self.color_logit.iter().all(|v| v.is_finite())
            && self.opacity_logit.is_finite()
    }

    /// Applies a rigid rotation `q` about the world origin.
    pub fn rotated(&self, q: Quat) -> Self {
        let r = rotation_matrix(q);
        Self {
            center: r * self.center,
            rotation: normalize_quat(quat_mul(normalize_quat(q), self.rotation)),
            ..self.clone()
        }
    }
}

/// World-space covariance `Σ = R S Sᵀ Rᵀ` with `S = diag(exp(log_scale))`.
pub fn covariance_of(g: &Gaussian3D) -> Matrix3<f64> {
    let m = g.rotation_matrix() * Matrix3::from_diagonal(&g.scale());
    m * m.transpose()
}

pub fn normalize_quat(q: Quat) -> Quat {
    let n = quat_norm(q);
    [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
}

pub fn quat_norm(q: Quat) -> f64 {
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt()
}

/// Hamilton product `a ⊗ b`.
pub fn quat_mul(a: Quat, b: Quat) -> Quat {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

/// Quaternion for a rotation of `angle` radians about `axis`.
pub fn quat_from_axis_angle(axis: Vector3<f64>, angle: f64) -> Quat {
    let a = axis.normalize() * (0.5 * angle).sin();
    [(0.5 * angle).cos(), a.x, a.y, a.z]
}

/// Rotation matrix of the normalized quaternion.
pub fn rotation_matrix(q: Quat) -> Matrix3<f64> {
    let [w, x, y, z] = normalize_quat(q);
    unit_quat_matrix(w, x, y, z)
}

#[inline]
pub(crate) fn unit_quat_matrix(w: f64, x: f64, y: f64, z: f64) -> Matrix3<f64> {
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// An ordered set of Gaussians plus the background color.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub gaussians: Vec<Gaussian3D>,
    pub background: [f64; 3],
}

impl Scene {
    pub fn new(gaussians: Vec<Gaussian3D>, background: [f64; 3]) -> Self {
        Self {
            gaussians,
            background,
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.gaussians.is_empty() {
            return Err(Error::Validation("scene has no gaussians".into()));
        }
        if !self.background.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(Error::Validation(format!(
                "background {:?} is outside [0,1]",
                self.background
            )));
        }
        if let Some(i) = self.gaussians.iter().position(|g| !g.is_finite()) {
            return Err(Error::Validation(format!("gaussian {i} has a non-finite parameter")));
        }
        Ok(())
    }

    /// Stable 64-bit FNV-1a digest of every parameter bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: f64| {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for c in self.background {
            eat(c);
        }
        for v in pack_params(self).as_slice() {
            eat(*v);
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, LN_2};

    use super::*;

    fn assert_mat_close(a: &Matrix3<f64>, b: &Matrix3<f64>, tol: f64) {
        let d = (a - b).abs().max();
        assert!(d <= tol, "matrices differ by {d}:\n{a}\n{b}");
    }

    fn gaussian(q: Quat, log_scale: [f64; 3]) -> Gaussian3D {
        Gaussian3D {
            center: Vector3::zeros(),
            rotation: q,
            log_scale: Vector3::from(log_scale),
            color_logit: Vector3::zeros(),
            opacity_logit: 0.0,
        }
    }

    #[test]
    fn identity_covariance() {
        let c = covariance_of(&gaussian(IDENTITY_QUAT, [0.0; 3]));
        assert_mat_close(&c, &Matrix3::identity(), 1e-15);
    }

    #[test]
    fn scaled_covariance_uses_variances() {
        let c = covariance_of(&gaussian(IDENTITY_QUAT, [LN_2, 0.0, 0.0]));
        assert_mat_close(&c, &Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0)), 1e-14);
    }

    #[test]
    fn rotated_covariance_matches_explicit_product() {
        let q = quat_from_axis_angle(Vector3::z(), FRAC_PI_2);
        let c = covariance_of(&gaussian(q, [LN_2, 0.0, 0.0]));
        // explicit R S Sᵀ Rᵀ with R = [[0,-1,0],[1,0,0],[0,0,1]]
        let r = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let s = Matrix3::from_diagonal(&Vector3::new(2.0, 1.0, 1.0));
        let expected = r * s * s.transpose() * r.transpose();
        assert_mat_close(&c, &expected, 1e-14);
        assert_mat_close(&c, &Matrix3::from_diagonal(&Vector3::new(1.0, 4.0, 1.0)), 1e-14);
    }

    #[test]
    fn rotation_matrix_is_orthonormal_for_unnormalized_input() {
        let r = rotation_matrix([2.0, 0.3, -1.0, 0.5]);
        assert_mat_close(&(r.transpose() * r), &Matrix3::identity(), 1e-14);
        assert!((r.determinant() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn quat_mul_composes_rotations() {
        let a = quat_from_axis_angle(Vector3::new(1.0, 2.0, 0.5), 0.7);
        let b = quat_from_axis_angle(Vector3::new(-0.3, 0.1, 1.0), 1.9);
        let composed = rotation_matrix(quat_mul(a, b));
        assert_mat_close(&composed, &(rotation_matrix(a) * rotation_matrix(b)), 1e-14);
    }

    #[test]
    fn natural_round_trip() {
        let g = Gaussian3D::from_natural(
            Vector3::new(1.0, 2.0, 3.0),
            [1.0, 1.0, 0.0, 0.0],
            Vector3::new(0.5, 1.0, 2.0),
            [0.25, 0.5, 0.75],
            0.9,
        );
        assert!((g.scale() - Vector3::new(0.5, 1.0, 2.0)).norm() < 1e-15);
        assert!((g.color() - Vector3::new(0.25, 0.5, 0.75)).norm() < 1e-15);
        assert!((g.opacity() - 0.9).abs() < 1e-15);
        assert!((quat_norm(g.rotation) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_scene_is_invalid() {
        let s = Scene::new(vec![], [0.0; 3]);
        assert!(matches!(s.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn fingerprint_changes_with_any_parameter() {
        let mut s = Scene::new(vec![gaussian(IDENTITY_QUAT, [0.0; 3])], [0.0; 3]);
        let before = s.fingerprint();
        s.gaussians[0].opacity_logit = 1e-12;
        assert_ne!(before, s.fingerprint());
    }
}
