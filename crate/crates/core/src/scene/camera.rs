use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Pinhole camera: world-to-camera pose plus intrinsics in pixel units.
///
/// Camera space looks down `+z`; pixel `(row, col)` has its center at
/// `(col + 0.5, row + 0.5)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraModel {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub near_clip: f64,
}

impl CameraModel {
    /// Identity pose with the principal point at the image center.
    pub fn centered(width: usize, height: usize, focal: f64) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            near_clip: 0.01,
        }
    }

    /// Camera at `eye` looking at `target`, image `y` pointing along `-up`.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        width: usize,
        height: usize,
        focal: f64,
    ) -> Self {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        Self {
            translation: -(rotation * eye),
            rotation,
            ..Self::centered(width, height, focal)
        }
    }

    pub fn to_camera(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    /// Back-projects pixel coordinates at camera depth `z` into world space.
    pub fn unproject(&self, px: f64, py: f64, z: f64) -> Vector3<f64> {
        let cam = Vector3::new((px - self.cx) / self.fx * z, (py - self.cy) / self.fy * z, z);
        self.rotation.transpose() * (cam - self.translation)
    }

    pub fn validate(&self) -> Result<()> {
        let ortho = (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max();
        if !(ortho <= 1e-9) {
            return Err(Error::Validation(format!(
                "camera rotation is not orthonormal (deviation {ortho:e})"
            )));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Validation("focal lengths must be positive".into()));
        }
        if !(self.near_clip > 0.0) {
            return Err(Error::Validation("near clip must be positive".into()));
        }
        if self.width < 2 || self.height < 2 {
            return Err(Error::Validation("image must be at least 2x2".into()));
        }
        if !(self.translation.iter().all(|v| v.is_finite()) && self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::Validation("camera has non-finite entries".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_puts_target_on_axis() {
        let cam = CameraModel::look_at(
            Vector3::new(3.0, -1.0, 2.0),
            Vector3::new(0.0, 0.5, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
            32,
            32,
            40.0,
        );
        cam.validate().unwrap();
        let c = cam.to_camera(&Vector3::new(0.0, 0.5, 0.0));
        assert!(c.x.abs() < 1e-12 && c.y.abs() < 1e-12 && c.z > 0.0);
    }

    #[test]
    fn unproject_inverts_projection() {
        let cam = CameraModel::look_at(
            Vector3::new(1.0, 2.0, -4.0),
            Vector3::zeros(),
            Vector3::y(),
            48,
            32,
            50.0,
        );
        let x = cam.unproject(10.25, 7.5, 3.0);
        let c = cam.to_camera(&x);
        assert!((c.z - 3.0).abs() < 1e-12);
        assert!((cam.fx * c.x / c.z + cam.cx - 10.25).abs() < 1e-12);
        assert!((cam.fy * c.y / c.z + cam.cy - 7.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_intrinsics() {
        let mut cam = CameraModel::centered(16, 16, 10.0);
        cam.fx = 0.0;
        assert!(cam.validate().is_err());
        let mut cam = CameraModel::centered(1, 16, 10.0);
        cam.near_clip = 1.0;
        assert!(cam.validate().is_err());
        let mut cam = CameraModel::centered(16, 16, 10.0);
        cam.rotation[(0, 1)] = 0.1;
        assert!(cam.validate().is_err());
    }
}
