//! Forward rendering: projection, footprint weights, per-sample compositing
//! and multi-sample aggregation over a tiled image.
//!
//! Every pixel `(row, col)` is evaluated at `n` subpixel positions
//! `(col + 0.5, row + 0.5) + δ_k`; the pixel color is the plain mean of the
//! `n` composited sample colors, clamped to `[0, 1]` after averaging.
//! Tiles are independent and rendered in parallel on the ambient rayon pool;
//! each tile writes a disjoint region and traverses its splats in a fixed
//! order, so images are bit-identical at any thread count.

mod composite;
mod project;
mod tape;

use std::cmp::Ordering;

use nalgebra::Vector2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::scene::{CameraModel, Scene};

pub use composite::{composite_sample, gaussian_weight, BlendState, Contribution};
pub use project::{
    bbox_sigmas, footprint_rect, perspective_jacobian, project_covariance, project_gaussian,
    project_point, PixelRect, ProjectedPoint, Splat2D,
};
pub use tape::{SampleRecord, Tape, TileTape};

use composite::{blend, gather};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CompositingMode {
    /// Order-free normalized blend `Σ αw c / (Σ αw + ε)`.
    #[default]
    Normalized,
    /// Depth-sorted alpha compositing with transmittance and background.
    FrontToBack,
}

impl std::str::FromStr for CompositingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(Self::Normalized),
            "front_to_back" | "front-to-back" => Ok(Self::FrontToBack),
            other => Err(Error::Unknown {
                kind: "compositing mode",
                name: other.to_string(),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderConfig {
    pub mode: CompositingMode,
    /// Footprint weights below this are skipped (one 8-bit level by default).
    pub weight_cutoff: f64,
    /// Added to the normalized-blend denominator; smaller totals fall back
    /// to the background.
    pub denom_epsilon: f64,
    pub tile_size: usize,
    /// Screen-space variance floor added to every projected covariance, px².
    pub blur: f64,
    /// Minimum bounding-box half extent in standard deviations.
    pub bbox_sigmas: f64,
    /// Merge per-tile gradient partials in a fixed order in the backward pass.
    pub deterministic: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            mode: CompositingMode::Normalized,
            weight_cutoff: 1.0 / 255.0,
            denom_epsilon: 1e-8,
            tile_size: 16,
            blur: 0.3,
            bbox_sigmas: 3.0,
            deterministic: true,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.1).contains(&self.weight_cutoff) {
            return Err(Error::Config(format!(
                "weight cutoff {} is outside [0, 0.1]",
                self.weight_cutoff
            )));
        }
        if !(self.denom_epsilon > 0.0) {
            return Err(Error::Config("denominator epsilon must be positive".into()));
        }
        if self.tile_size == 0 {
            return Err(Error::Config("tile size must be positive".into()));
        }
        if !(self.blur >= 0.0) || !(self.bbox_sigmas > 0.0) {
            return Err(Error::Config("blur must be non-negative and bbox extent positive".into()));
        }
        Ok(())
    }
}

/// Subpixel sample offsets relative to the pixel center.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSpec {
    offsets: Vec<Vector2<f64>>,
}

impl SampleSpec {
    pub fn new(offsets: Vec<[f64; 2]>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::Config("sample pattern needs at least one offset".into()));
        }
        for o in &offsets {
            if !o.iter().all(|v| (-0.5..0.5).contains(v)) {
                return Err(Error::Config(format!("offset {o:?} is outside [-0.5, 0.5)")));
            }
        }
        Ok(Self {
            offsets: offsets.into_iter().map(Vector2::from).collect(),
        })
    }

    /// One sample at the pixel center.
    pub fn single() -> Self {
        Self {
            offsets: vec![Vector2::zeros()],
        }
    }

    /// Two samples on the diagonal.
    pub fn diagonal2() -> Self {
        Self::new(vec![[-0.25, -0.25], [0.25, 0.25]]).unwrap()
    }

    /// Default 4× rotated-grid pattern.
    pub fn rotated_grid4() -> Self {
        Self::new(vec![
            [-0.125, -0.375],
            [0.375, -0.125],
            [0.125, 0.375],
            [-0.375, 0.125],
        ])
        .unwrap()
    }

    /// Regular 2×2 grid at `±0.25`.
    pub fn regular_grid4() -> Self {
        Self::new(vec![[-0.25, -0.25], [0.25, -0.25], [-0.25, 0.25], [0.25, 0.25]]).unwrap()
    }

    /// `m × m` stratified grid of cell centers (`m = 8` is the 64× reference).
    pub fn grid(m: usize) -> Self {
        assert!(m > 0);
        let mut offsets = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                offsets.push([(j as f64 + 0.5) / m as f64 - 0.5, (i as f64 + 0.5) / m as f64 - 0.5]);
            }
        }
        Self::new(offsets).unwrap()
    }

    /// Pattern for a sample count: 1 center, 2 diagonal, 4 rotated grid,
    /// perfect squares as stratified grids.
    pub fn for_count(n: usize) -> Result<Self> {
        match n {
            1 => Ok(Self::single()),
            2 => Ok(Self::diagonal2()),
            4 => Ok(Self::rotated_grid4()),
            n => {
                let m = (n as f64).sqrt().round() as usize;
                if m * m == n && m > 0 {
                    Ok(Self::grid(m))
                } else {
                    Err(Error::Config(format!("no built-in pattern for {n} samples")))
                }
            }
        }
    }

    pub fn count(&self) -> usize {
        self.offsets.len()
    }

    pub fn offsets(&self) -> &[Vector2<f64>] {
        &self.offsets
    }
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self::rotated_grid4()
    }
}

#[inline]
pub fn pixel_center(row: usize, col: usize) -> Vector2<f64> {
    Vector2::new(col as f64 + 0.5, row as f64 + 0.5)
}

pub(crate) fn depth_order(a: &Splat2D, b: &Splat2D) -> Ordering {
    a.depth
        .total_cmp(&b.depth)
        .then(a.source_index.cmp(&b.source_index))
}

/// Projects every Gaussian; culled ones are omitted. Output is in scene order.
pub fn project_scene(scene: &Scene, cam: &CameraModel, cfg: &RenderConfig) -> Vec<Splat2D> {
    scene
        .gaussians
        .iter()
        .enumerate()
        .filter_map(|(i, g)| project_gaussian(g, i, cam, cfg))
        .collect()
}

/// A tile rectangle and the splats (indices into the splat list) that touch it.
pub(crate) struct TileBin {
    pub rect: PixelRect,
    pub list: Vec<u32>,
}

pub(crate) fn bin_tiles(splats: &[Splat2D], cam: &CameraModel, cfg: &RenderConfig) -> Vec<TileBin> {
    let ts = cfg.tile_size;
    let tiles_x = cam.width.div_ceil(ts);
    let tiles_y = cam.height.div_ceil(ts);
    let mut bins: Vec<TileBin> = (0..tiles_y)
        .flat_map(|ty| {
            (0..tiles_x).map(move |tx| TileBin {
                rect: PixelRect {
                    x0: tx * ts,
                    y0: ty * ts,
                    x1: ((tx + 1) * ts).min(cam.width),
                    y1: ((ty + 1) * ts).min(cam.height),
                },
                list: Vec::new(),
            })
        })
        .collect();
    for (k, s) in splats.iter().enumerate() {
        let b = &s.bbox;
        for ty in b.y0 / ts..=(b.y1 - 1) / ts {
            for tx in b.x0 / ts..=(b.x1 - 1) / ts {
                bins[ty * tiles_x + tx].list.push(k as u32);
            }
        }
    }
    if cfg.mode == CompositingMode::FrontToBack {
        for bin in &mut bins {
            bin.list
                .sort_by(|&a, &b| depth_order(&splats[a as usize], &splats[b as usize]));
        }
    }
    bins
}

fn check_inputs(scene: &Scene, cam: &CameraModel, cfg: &RenderConfig) -> Result<()> {
    if scene.is_empty() {
        return Err(Error::Validation("cannot render an empty scene".into()));
    }
    cam.validate()?;
    cfg.validate()
}

struct TileOutput {
    colors: Vec<[f64; 3]>,
    tape: Option<TileTape>,
}

fn render_tile(
    bin: &TileBin,
    splats: &[Splat2D],
    offsets: &[Vector2<f64>],
    cfg: &RenderConfig,
    background: [f64; 3],
    record: bool,
) -> TileOutput {
    let r = bin.rect;
    let n = offsets.len();
    let npix = (r.x1 - r.x0) * (r.y1 - r.y0);
    let mut colors = Vec::with_capacity(npix);
    let mut samples = Vec::with_capacity(if record { npix * n } else { 0 });
    let mut all = Vec::new();
    let mut contribs = Vec::new();
    let lookup = |slot: u32| &splats[bin.list[slot as usize] as usize];
    for row in r.y0..r.y1 {
        for col in r.x0..r.x1 {
            let center = pixel_center(row, col);
            let mut acc = [0.0; 3];
            for off in offsets {
                let u = center + off;
                let candidates = bin
                    .list
                    .iter()
                    .enumerate()
                    .map(|(slot, &k)| (slot as u32, &splats[k as usize]))
                    .filter(|(_, s)| s.bbox.contains(col, row));
                gather(candidates, &u, cfg, &mut contribs);
                let (c, state) = blend(&contribs, lookup, cfg, background);
                for ch in 0..3 {
                    acc[ch] += c[ch];
                }
                if record {
                    samples.push(SampleRecord {
                        start: all.len() as u32,
                        len: contribs.len() as u32,
                        state,
                    });
                    all.extend_from_slice(&contribs);
                }
            }
            colors.push(finish_pixel(acc, n));
        }
    }
    TileOutput {
        colors,
        tape: record.then(|| TileTape {
            rect: r,
            list: bin.list.clone(),
            samples,
            contribs: all,
        }),
    }
}

#[inline]
pub(crate) fn blend_contributions<'a>(
    contribs: &[Contribution],
    lookup: impl Fn(u32) -> &'a Splat2D,
    cfg: &RenderConfig,
    background: [f64; 3],
) -> [f64; 3] {
    blend(contribs, lookup, cfg, background).0
}

#[inline]
pub(crate) fn finish_pixel(acc: [f64; 3], n: usize) -> [f64; 3] {
    let inv = n as f64;
    [
        (acc[0] / inv).clamp(0.0, 1.0),
        (acc[1] / inv).clamp(0.0, 1.0),
        (acc[2] / inv).clamp(0.0, 1.0),
    ]
}

fn assemble(cam: &CameraModel, bins: &[TileBin], outputs: &[TileOutput]) -> ImageBuffer {
    let mut img = ImageBuffer::new(cam.height, cam.width);
    for (bin, out) in bins.iter().zip(outputs) {
        let r = bin.rect;
        let mut k = 0;
        for row in r.y0..r.y1 {
            for col in r.x0..r.x1 {
                img.set(row, col, out.colors[k]);
                k += 1;
            }
        }
    }
    img
}

fn render_impl(
    scene: &Scene,
    cam: &CameraModel,
    cfg: &RenderConfig,
    samples: &SampleSpec,
    record: bool,
) -> Result<(ImageBuffer, Option<Tape>)> {
    check_inputs(scene, cam, cfg)?;
    let splats = project_scene(scene, cam, cfg);
    let bins = bin_tiles(&splats, cam, cfg);
    let outputs: Vec<TileOutput> = bins
        .par_iter()
        .map(|bin| render_tile(bin, &splats, samples.offsets(), cfg, scene.background, record))
        .collect();
    let img = assemble(cam, &bins, &outputs);
    let tape = record.then(|| Tape {
        width: cam.width,
        height: cam.height,
        offsets: samples.offsets().to_vec(),
        cfg: *cfg,
        background: scene.background,
        gaussian_count: scene.len(),
        fingerprint: scene.fingerprint(),
        splats,
        tiles: outputs.into_iter().map(|o| o.tape.unwrap()).collect(),
    });
    Ok((img, tape))
}

/// Multi-sample render: each pixel is the mean of its composited subsamples.
pub fn render(scene: &Scene, cam: &CameraModel, cfg: &RenderConfig, samples: &SampleSpec) -> Result<ImageBuffer> {
    Ok(render_impl(scene, cam, cfg, samples, false)?.0)
}

/// Render that also records the per-sample contributor lists for the
/// backward pass.
pub fn render_with_tape(
    scene: &Scene,
    cam: &CameraModel,
    cfg: &RenderConfig,
    samples: &SampleSpec,
) -> Result<(ImageBuffer, Tape)> {
    let (img, tape) = render_impl(scene, cam, cfg, samples, true)?;
    Ok((img, tape.expect("tape requested")))
}

/// Classic one-sample-per-pixel render at pixel centers, without any
/// subsample bookkeeping.
pub fn render_single_sample(scene: &Scene, cam: &CameraModel, cfg: &RenderConfig) -> Result<ImageBuffer> {
    check_inputs(scene, cam, cfg)?;
    let splats = project_scene(scene, cam, cfg);
    let bins = bin_tiles(&splats, cam, cfg);
    let bg = scene.background;
    let outputs: Vec<TileOutput> = bins
        .par_iter()
        .map(|bin| {
            let r = bin.rect;
            let mut contribs = Vec::new();
            let mut colors = Vec::with_capacity((r.x1 - r.x0) * (r.y1 - r.y0));
            for row in r.y0..r.y1 {
                for col in r.x0..r.x1 {
                    let u = pixel_center(row, col);
                    let candidates = bin
                        .list
                        .iter()
                        .enumerate()
                        .map(|(slot, &k)| (slot as u32, &splats[k as usize]))
                        .filter(|(_, s)| s.bbox.contains(col, row));
                    gather(candidates, &u, cfg, &mut contribs);
                    let (c, _) = blend(&contribs, |slot| &splats[bin.list[slot as usize] as usize], cfg, bg);
                    colors.push([c[0].clamp(0.0, 1.0), c[1].clamp(0.0, 1.0), c[2].clamp(0.0, 1.0)]);
                }
            }
            TileOutput { colors, tape: None }
        })
        .collect();
    Ok(assemble(cam, &bins, &outputs))
}
