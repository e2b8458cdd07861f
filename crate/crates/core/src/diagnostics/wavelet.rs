//! Single-level orthonormal Haar transform per color channel.
//!
//! For a 2×2 block `[[a, b], [c, d]]`:
//! `LL = (a+b+c+d)/2`, `LH = (a−b+c−d)/2` (left/right difference, lights up
//! vertical edges), `HL = (a+b−c−d)/2` (top/bottom difference) and
//! `HH = (a−b−c+d)/2`. Odd extents are padded by replicating the last row or
//! column; the inverse crops back to the original size.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::image::ImageBuffer;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subband {
    LL,
    LH,
    HL,
    HH,
}

impl Subband {
    pub const ALL: [Subband; 4] = [Subband::LL, Subband::LH, Subband::HL, Subband::HH];

    pub fn name(self) -> &'static str {
        match self {
            Subband::LL => "LL",
            Subband::LH => "LH",
            Subband::HL => "HL",
            Subband::HH => "HH",
        }
    }
}

/// Four half-resolution subbands holding raw (unclamped) coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletDecomposition {
    pub ll: ImageBuffer,
    pub lh: ImageBuffer,
    pub hl: ImageBuffer,
    pub hh: ImageBuffer,
    /// Extents of the input before padding.
    pub height: usize,
    pub width: usize,
    pub padded_rows: bool,
    pub padded_cols: bool,
}

impl WaveletDecomposition {
    pub fn band(&self, b: Subband) -> &ImageBuffer {
        match b {
            Subband::LL => &self.ll,
            Subband::LH => &self.lh,
            Subband::HL => &self.hl,
            Subband::HH => &self.hh,
        }
    }

    /// Sum of squared coefficients in a band.
    pub fn energy(&self, b: Subband) -> f64 {
        self.band(b).data().iter().map(|v| v * v).sum()
    }
}

pub fn haar_dwt(img: &ImageBuffer) -> WaveletDecomposition {
    let (h, w) = (img.height(), img.width());
    let (hh_, hw) = (h.div_ceil(2), w.div_ceil(2));
    let px = |i: usize, j: usize, c: usize| img.at(i.min(h - 1), j.min(w - 1), c);
    let mut ll = ImageBuffer::new(hh_, hw);
    let mut lh = ImageBuffer::new(hh_, hw);
    let mut hl = ImageBuffer::new(hh_, hw);
    let mut hh = ImageBuffer::new(hh_, hw);
    for i in 0..hh_ {
        for j in 0..hw {
            let mut v = [[0.0; 3]; 4];
            for c in 0..3 {
                let a = px(2 * i, 2 * j, c);
                let b = px(2 * i, 2 * j + 1, c);
                let cc = px(2 * i + 1, 2 * j, c);
                let d = px(2 * i + 1, 2 * j + 1, c);
                v[0][c] = 0.5 * (a + b + cc + d);
                v[1][c] = 0.5 * (a - b + cc - d);
                v[2][c] = 0.5 * (a + b - cc - d);
                v[3][c] = 0.5 * (a - b - cc + d);
            }
            ll.set(i, j, v[0]);
            lh.set(i, j, v[1]);
            hl.set(i, j, v[2]);
            hh.set(i, j, v[3]);
        }
    }
    WaveletDecomposition {
        ll,
        lh,
        hl,
        hh,
        height: h,
        width: w,
        padded_rows: h % 2 == 1,
        padded_cols: w % 2 == 1,
    }
}

/// Inverse transform, cropped to the original extents.
pub fn haar_idwt(dec: &WaveletDecomposition) -> ImageBuffer {
    let (bh, bw) = (dec.ll.height(), dec.ll.width());
    let mut full = ImageBuffer::new(2 * bh, 2 * bw);
    for i in 0..bh {
        for j in 0..bw {
            let mut blk = [[0.0; 3]; 4];
            for c in 0..3 {
                let s = dec.ll.at(i, j, c);
                let x = dec.lh.at(i, j, c);
                let y = dec.hl.at(i, j, c);
                let z = dec.hh.at(i, j, c);
                blk[0][c] = 0.5 * (s + x + y + z);
                blk[1][c] = 0.5 * (s - x + y - z);
                blk[2][c] = 0.5 * (s + x - y - z);
                blk[3][c] = 0.5 * (s - x - y + z);
            }
            full.set(2 * i, 2 * j, blk[0]);
            full.set(2 * i, 2 * j + 1, blk[1]);
            full.set(2 * i + 1, 2 * j, blk[2]);
            full.set(2 * i + 1, 2 * j + 1, blk[3]);
        }
    }
    if full.height() == dec.height && full.width() == dec.width {
        full
    } else {
        full.crop(0, 0, dec.height, dec.width)
    }
}

/// Min-max stretch of a band to `[0, 1]` over all channels; a flat band maps
/// to 0.5.
pub fn normalize_band(band: &ImageBuffer) -> ImageBuffer {
    let lo = band.data().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = band.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let data = band
        .data()
        .iter()
        .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.5 })
        .collect();
    ImageBuffer::from_vec(band.height(), band.width(), data).expect("same extents")
}

/// Writes `<stem>_LL.ppm` … `<stem>_HH.ppm` (normalized for viewing) and
/// `<stem>_coefficients.csv` with every raw coefficient.
pub fn write_subbands(dec: &WaveletDecomposition, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut csv = String::from("band,row,col,channel,value\n");
    for b in Subband::ALL {
        let band = dec.band(b);
        normalize_band(band).write_ppm(dir.join(format!("{stem}_{}.ppm", b.name())))?;
        for i in 0..band.height() {
            for j in 0..band.width() {
                for c in 0..3 {
                    writeln!(csv, "{},{i},{j},{c},{}", b.name(), band.at(i, j, c)).unwrap();
                }
            }
        }
    }
    fs::write(dir.join(format!("{stem}_coefficients.csv")), csv)?;
    Ok(())
}
