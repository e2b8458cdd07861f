//! Synthetic targets and the pattern scenes used for benchmarks.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::raster::{render, RenderConfig, SampleSpec};
use crate::scene::{normalize_quat, CameraModel, Gaussian3D, Scene, IDENTITY_QUAT};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetKind {
    Checkerboard,
    ThinLines,
    EdgeHalfplane,
    GaussianBlobs,
}

impl TargetKind {
    pub const ALL: [TargetKind; 4] = [
        TargetKind::Checkerboard,
        TargetKind::ThinLines,
        TargetKind::EdgeHalfplane,
        TargetKind::GaussianBlobs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TargetKind::Checkerboard => "checkerboard",
            TargetKind::ThinLines => "thin_lines",
            TargetKind::EdgeHalfplane => "edge_halfplane",
            TargetKind::GaussianBlobs => "gaussian_blobs",
        }
    }
}

impl std::str::FromStr for TargetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s || k.name().replace('_', "-") == s)
            .ok_or_else(|| Error::Unknown {
                kind: "target kind",
                name: s.to_string(),
            })
    }
}

/// A target image and, for rendered kinds, the scene and camera behind it.
#[derive(Clone, Debug)]
pub struct SyntheticTarget {
    pub image: ImageBuffer,
    pub scene: Option<Scene>,
    pub camera: Option<CameraModel>,
}

/// Axis-aligned two-color checkerboard with square cells of `period` pixels.
pub fn checkerboard(height: usize, width: usize, period: usize, dark: [f64; 3], light: [f64; 3]) -> ImageBuffer {
    ImageBuffer::from_fn(height, width, |i, j| if (i / period + j / period).is_multiple_of(2) { dark } else { light })
}

/// Box-filters `f` over each pixel with an `m × m` grid of point samples.
fn supersample(height: usize, width: usize, m: usize, f: impl Fn(f64, f64) -> [f64; 3]) -> ImageBuffer {
    ImageBuffer::from_fn(height, width, |i, j| {
        let mut acc = [0.0; 3];
        for a in 0..m {
            for b in 0..m {
                let c = f(j as f64 + (b as f64 + 0.5) / m as f64, i as f64 + (a as f64 + 0.5) / m as f64);
                for ch in 0..3 {
                    acc[ch] += c[ch];
                }
            }
        }
        let k = (m * m) as f64;
        [acc[0] / k, acc[1] / k, acc[2] / k]
    })
}

fn two_colors(rng: &mut ChaCha8Rng) -> ([f64; 3], [f64; 3]) {
    let dark = [rng.random_range(0.05..0.25), rng.random_range(0.05..0.25), rng.random_range(0.05..0.25)];
    let light = [rng.random_range(0.75..0.95), rng.random_range(0.75..0.95), rng.random_range(0.75..0.95)];
    (dark, light)
}

/// Half-plane indicator through `(cx, cy)` with the edge tilted `angle`
/// radians from vertical, in pixel coordinates.
pub fn edge_pattern(cx: f64, cy: f64, angle: f64, dark: [f64; 3], light: [f64; 3]) -> impl Fn(f64, f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    move |x, y| if (x - cx) * c + (y - cy) * s >= 0.0 { light } else { dark }
}

/// Checkerboard of `period`-pixel cells rotated by `angle` about `(cx, cy)`.
pub fn rotated_checker_pattern(
    cx: f64,
    cy: f64,
    period: f64,
    angle: f64,
    dark: [f64; 3],
    light: [f64; 3],
) -> impl Fn(f64, f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    move |x, y| {
        let u = ((x - cx) * c + (y - cy) * s) / period;
        let v = (-(x - cx) * s + (y - cy) * c) / period;
        if (u.floor() + v.floor()).rem_euclid(2.0) == 0.0 {
            dark
        } else {
            light
        }
    }
}

fn thin_lines_pattern(angle: f64, spacing: f64, width: f64, dark: [f64; 3], light: [f64; 3]) -> impl Fn(f64, f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    move |x, y| {
        let d = (x * c + y * s).rem_euclid(spacing);
        if d < width {
            light
        } else {
            dark
        }
    }
}

/// Random scene of `count` Gaussians in front of a centered camera.
pub fn random_blob_scene(count: usize, height: usize, width: usize, rng: &mut ChaCha8Rng) -> (Scene, CameraModel) {
    let focal = 1.2 * width.max(height) as f64;
    let cam = CameraModel::centered(width, height, focal);
    let half_x = 0.4 * width as f64 / focal * 4.0;
    let half_y = 0.4 * height as f64 / focal * 4.0;
    let gaussians = (0..count)
        .map(|_| {
            let center = Vector3::new(
                rng.random_range(-half_x..half_x),
                rng.random_range(-half_y..half_y),
                rng.random_range(3.6..4.4),
            );
            let q = normalize_quat([1.0, rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)]);
            let base = rng.random_range(0.08..0.2);
            let scale = Vector3::new(base * rng.random_range(0.6..1.6), base * rng.random_range(0.6..1.6), base);
            let color = [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)];
            Gaussian3D::from_natural(center, q, scale, color, rng.random_range(0.6..0.95))
        })
        .collect();
    (Scene::new(gaussians, [0.0; 3]), cam)
}

/// Deterministic target of the given kind; `height, width ≥ 16`.
pub fn make_synthetic_target(kind: TargetKind, height: usize, width: usize, seed: u64) -> Result<SyntheticTarget> {
    if height < 16 || width < 16 {
        return Err(Error::ImageTooSmall(format!("synthetic targets need at least 16x16, got {height}x{width}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (dark, light) = two_colors(&mut rng);
    let image_only = |image| SyntheticTarget {
        image,
        scene: None,
        camera: None,
    };
    Ok(match kind {
        TargetKind::Checkerboard => image_only(checkerboard(height, width, 4, dark, light)),
        TargetKind::ThinLines => {
            let angle = rng.random_range(0.15..0.6);
            image_only(supersample(height, width, 8, thin_lines_pattern(angle, 5.0, 1.0, dark, light)))
        }
        TargetKind::EdgeHalfplane => {
            let angle = rng.random_range(0.05..0.4);
            let f = edge_pattern(width as f64 / 2.0, height as f64 / 2.0, angle, dark, light);
            image_only(supersample(height, width, 8, f))
        }
        TargetKind::GaussianBlobs => {
            let (scene, cam) = random_blob_scene(24, height, width, &mut rng);
            let image = render(&scene, &cam, &RenderConfig::default(), &SampleSpec::default())?;
            SyntheticTarget {
                image,
                scene: Some(scene),
                camera: Some(cam),
            }
        }
    })
}

/// Flat layer of small Gaussians on a regular screen-space grid, each
/// colored by `pattern` at its projected center.
///
/// `spacing` and `sigma` are in pixels; the layer sits at `depth` in front
/// of `cam`, which must look down its own +z axis from the origin.
pub fn pattern_scene(
    cam: &CameraModel,
    depth: f64,
    spacing: f64,
    sigma: f64,
    opacity: f64,
    pattern: impl Fn(f64, f64) -> [f64; 3],
) -> Scene {
    let nx = (cam.width as f64 / spacing).ceil() as usize + 2;
    let ny = (cam.height as f64 / spacing).ceil() as usize + 2;
    let world_sigma = sigma * depth / cam.fx;
    let mut gaussians = Vec::with_capacity(nx * ny);
    for i in 0..ny {
        for j in 0..nx {
            let u = (j as f64 - 0.5) * spacing;
            let v = (i as f64 - 0.5) * spacing;
            let mut color = pattern(u, v);
            for c in &mut color {
                *c = c.clamp(1e-3, 1.0 - 1e-3);
            }
            gaussians.push(Gaussian3D::from_natural(
                cam.unproject(u, v, depth),
                IDENTITY_QUAT,
                Vector3::new(world_sigma, world_sigma, world_sigma * 0.25),
                color,
                opacity,
            ));
        }
    }
    Scene::new(gaussians, [0.0; 3])
}

/// Alias-prone benchmark scenes: a slanted edge or a rotated fine
/// checkerboard, both made of sub-pixel Gaussians.
pub fn aliasing_scene(kind: TargetKind, size: usize, seed: u64) -> Result<(Scene, CameraModel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (dark, light) = two_colors(&mut rng);
    let cam = CameraModel::centered(size, size, size as f64 * 1.5);
    let c = size as f64 / 2.0;
    let scene = match kind {
        TargetKind::EdgeHalfplane => {
            let angle = rng.random_range(0.08..0.3);
            pattern_scene(&cam, 4.0, 0.5, 0.25, 0.95, edge_pattern(c + 0.3, c, angle, dark, light))
        }
        TargetKind::Checkerboard => {
            let angle = rng.random_range(0.25..0.5);
            pattern_scene(&cam, 4.0, 0.5, 0.25, 0.95, rotated_checker_pattern(c, c, 2.5, angle, dark, light))
        }
        TargetKind::ThinLines => {
            let angle = rng.random_range(0.15..0.6);
            pattern_scene(&cam, 4.0, 0.5, 0.25, 0.95, thin_lines_pattern(angle, 4.0, 1.0, dark, light))
        }
        TargetKind::GaussianBlobs => {
            return Err(Error::Unknown {
                kind: "aliasing scene",
                name: kind.name().to_string(),
            })
        }
    };
    Ok((scene, cam))
}
