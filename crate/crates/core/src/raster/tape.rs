use nalgebra::Vector2;

use super::composite::{blend, BlendState, Contribution};
use super::{finish_pixel, PixelRect, RenderConfig, Splat2D};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::scene::Scene;

/// Blend intermediates for one `(pixel, subsample)`. Contributors live in
/// the owning tile's `contribs[start..start+len]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleRecord {
    pub start: u32,
    pub len: u32,
    pub state: BlendState,
}

/// Forward record of one tile. Samples are stored row-major over the tile
/// rectangle, `n` consecutive records per pixel. Contribution slots index
/// `list`, which in turn indexes the tape's splats.
#[derive(Clone, Debug)]
pub struct TileTape {
    pub rect: PixelRect,
    pub list: Vec<u32>,
    pub samples: Vec<SampleRecord>,
    pub contribs: Vec<Contribution>,
}

/// Everything the backward pass needs from a forward render.
#[derive(Clone, Debug)]
pub struct Tape {
    pub width: usize,
    pub height: usize,
    pub offsets: Vec<Vector2<f64>>,
    pub cfg: RenderConfig,
    pub background: [f64; 3],
    pub gaussian_count: usize,
    pub fingerprint: u64,
    pub splats: Vec<Splat2D>,
    pub tiles: Vec<TileTape>,
}

impl Tape {
    pub fn sample_count(&self) -> usize {
        self.offsets.len()
    }

    /// Total recorded `(sample, splat)` contributions.
    pub fn contribution_count(&self) -> usize {
        self.tiles.iter().map(|t| t.contribs.len()).sum()
    }

    /// Re-blends the recorded contributors; reproduces the forward image bit
    /// for bit.
    pub fn replay(&self) -> ImageBuffer {
        let n = self.sample_count();
        let mut img = ImageBuffer::new(self.height, self.width);
        for tile in &self.tiles {
            let r = tile.rect;
            let lookup = |slot: u32| &self.splats[tile.list[slot as usize] as usize];
            let mut k = 0;
            for row in r.y0..r.y1 {
                for col in r.x0..r.x1 {
                    let mut acc = [0.0; 3];
                    for _ in 0..n {
                        let rec = &tile.samples[k];
                        let cs = &tile.contribs[rec.start as usize..(rec.start + rec.len) as usize];
                        let (c, _) = blend(cs, lookup, &self.cfg, self.background);
                        for ch in 0..3 {
                            acc[ch] += c[ch];
                        }
                        k += 1;
                    }
                    img.set(row, col, finish_pixel(acc, n));
                }
            }
        }
        img
    }

    /// Errors unless `scene` is exactly the scene this tape was recorded from.
    pub fn check_scene(&self, scene: &Scene) -> Result<()> {
        if scene.len() != self.gaussian_count {
            return Err(Error::TapeMismatch(format!(
                "tape has {} gaussians, scene has {}",
                self.gaussian_count,
                scene.len()
            )));
        }
        if scene.fingerprint() != self.fingerprint {
            return Err(Error::TapeMismatch("scene parameters changed since the forward pass".into()));
        }
        Ok(())
    }
}
