use nalgebra::Vector2;

use super::{CompositingMode, RenderConfig, Splat2D};

/// Footprint weight `exp(-½ dᵀ Σ⁻¹ d)` with `d = u - mean`.
#[inline]
pub fn gaussian_weight(splat: &Splat2D, u: &Vector2<f64>) -> f64 {
    let dx = u.x - splat.mean2d.x;
    let dy = u.y - splat.mean2d.y;
    let a = &splat.cov2d_inv;
    let q = dx * dx * a[(0, 0)] + 2.0 * dx * dy * a[(0, 1)] + dy * dy * a[(1, 1)];
    (-0.5 * q).exp()
}

/// One splat's surviving contribution at a sample: `(slot, w)` where `slot`
/// indexes whatever splat list the caller blends from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contribution {
    pub slot: u32,
    pub weight: f64,
}

/// Gathers the contributions above the cutoff, in list order.
#[inline]
pub(crate) fn gather<'a>(
    splats: impl Iterator<Item = (u32, &'a Splat2D)>,
    u: &Vector2<f64>,
    cfg: &RenderConfig,
    out: &mut Vec<Contribution>,
) {
    out.clear();
    for (slot, s) in splats {
        let w = gaussian_weight(s, u);
        if w >= cfg.weight_cutoff && w > 0.0 {
            out.push(Contribution { slot, weight: w });
        }
    }
}

/// Per-sample intermediates needed to differentiate the blend.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BlendState {
    /// Normalized mode: `Σ αw`. Front-to-back: residual transmittance.
    pub denominator: f64,
    /// Normalized mode: `Σ αw c`. Unused in front-to-back mode.
    pub numerator: [f64; 3],
    /// True when the sample fell back to the background color.
    pub background: bool,
}

/// Blends gathered contributions. `lookup` resolves a slot to its splat.
#[inline]
pub(crate) fn blend<'a>(
    contribs: &[Contribution],
    lookup: impl Fn(u32) -> &'a Splat2D,
    cfg: &RenderConfig,
    background: [f64; 3],
) -> ([f64; 3], BlendState) {
    match cfg.mode {
        CompositingMode::Normalized => {
            let mut num = [0.0; 3];
            let mut den = 0.0;
            for c in contribs {
                let s = lookup(c.slot);
                let a = s.opacity * c.weight;
                den += a;
                for ch in 0..3 {
                    num[ch] += a * s.color[ch];
                }
            }
            let state = BlendState {
                denominator: den,
                numerator: num,
                background: den < cfg.denom_epsilon,
            };
            if state.background {
                (background, state)
            } else {
                let d = den + cfg.denom_epsilon;
                ([num[0] / d, num[1] / d, num[2] / d], state)
            }
        }
        CompositingMode::FrontToBack => {
            let mut color = [0.0; 3];
            let mut t = 1.0;
            for c in contribs {
                let s = lookup(c.slot);
                let a = s.opacity * c.weight;
                for ch in 0..3 {
                    color[ch] += s.color[ch] * a * t;
                }
                t *= 1.0 - a;
            }
            for ch in 0..3 {
                color[ch] += t * background[ch];
            }
            let state = BlendState {
                denominator: t,
                numerator: [0.0; 3],
                background: contribs.is_empty(),
            };
            (color, state)
        }
    }
}

/// Color at subpixel position `u` from the given splats.
///
/// Normalized mode sums in the order given; front-to-back mode sorts by
/// depth (ties by source index) first.
pub fn composite_sample(
    splats: &[Splat2D],
    u: &Vector2<f64>,
    cfg: &RenderConfig,
    background: [f64; 3],
) -> [f64; 3] {
    let mut order: Vec<u32> = (0..splats.len() as u32).collect();
    if cfg.mode == CompositingMode::FrontToBack {
        order.sort_by(|&a, &b| super::depth_order(&splats[a as usize], &splats[b as usize]));
    }
    let mut contribs = Vec::new();
    gather(order.iter().map(|&k| (k, &splats[k as usize])), u, cfg, &mut contribs);
    blend(&contribs, |k| &splats[k as usize], cfg, background).0
}
