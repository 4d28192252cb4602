//! Undecimated (à trous) B3-spline wavelet decomposition.
//!
//! Level `s` smooths `c(s-1)` with the B3 kernel dilated by `2^(s-1)` and stores
//! the difference as the detail plane `w(s)`. All planes stay at full
//! resolution, so `c(0) = c(S) + w(S) + ... + w(1)` holds by telescoping.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{save_image, Image};
use crate::resample::Boundary;
use crate::scalar::Scalar;

/// Taps of the cubic B-spline scaling filter.
pub const B3_TAPS: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveletConfig {
    pub levels: usize,
    /// Multiplier on accumulated detail planes in the diffusion targets.
    pub detail_gain: f64,
}

impl Default for WaveletConfig {
    fn default() -> Self {
        WaveletConfig { levels: 6, detail_gain: 0.8 }
    }
}

impl WaveletConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 1 {
            return Err(Error::invalid("wavelet levels must be at least 1"));
        }
        if !(self.detail_gain > 0.0 && self.detail_gain.is_finite()) {
            return Err(Error::invalid(format!("detail gain {} must be > 0", self.detail_gain)));
        }
        Ok(())
    }
}

/// The level-`s` kernel with `2^(s-1) - 1` zeros between taps.
pub fn dilated_b3_kernel(level: usize) -> Result<Vec<f64>> {
    if level < 1 {
        return Err(Error::invalid("kernel level must be at least 1"));
    }
    let step = 1usize << (level - 1);
    let mut k = vec![0.0; 4 * step + 1];
    for (i, &t) in B3_TAPS.iter().enumerate() {
        k[i * step] = t;
    }
    Ok(k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtrousPyramid<T> {
    smooth: Vec<Image<T>>,
    details: Vec<Image<T>>,
}

impl<T: Scalar> AtrousPyramid<T> {
    pub fn from_parts(smooth: Vec<Image<T>>, details: Vec<Image<T>>) -> Result<Self> {
        if smooth.len() != details.len() + 1 || details.is_empty() {
            return Err(Error::invalid(format!(
                "pyramid needs S >= 1 detail planes and S + 1 smooth planes, got {} and {}",
                details.len(),
                smooth.len()
            )));
        }
        let shape = smooth[0].shape();
        for plane in smooth.iter().chain(&details) {
            plane.ensure_shape(shape)?;
        }
        Ok(AtrousPyramid { smooth, details })
    }

    pub fn levels(&self) -> usize {
        self.details.len()
    }

    /// `c(s)` for `s` in `0..=S`.
    pub fn smooth(&self, s: usize) -> &Image<T> {
        &self.smooth[s]
    }

    /// `w(s)` for `s` in `1..=S`.
    pub fn detail(&self, s: usize) -> &Image<T> {
        &self.details[s - 1]
    }

    pub fn coarsest(&self) -> &Image<T> {
        &self.smooth[self.levels()]
    }

    pub fn details_mut(&mut self) -> impl Iterator<Item = &mut Image<T>> {
        self.details.iter_mut()
    }

    /// Writes `c(S)` and every `w(s)`, each min-max mapped to [0, 1], as
    /// `coarse.png` and `detail_<s>.png` under `dir`.
    pub fn dump_png(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_owned(), source })?;
        save_image(&normalize_range(self.coarsest()), dir.join("coarse.png"))?;
        for s in 1..=self.levels() {
            save_image(&normalize_range(self.detail(s)), dir.join(format!("detail_{s}.png")))?;
        }
        Ok(())
    }
}

fn normalize_range<T: Scalar>(img: &Image<T>) -> Image<T> {
    let lo = img.data().iter().copied().fold(T::infinity(), T::min);
    let hi = img.data().iter().copied().fold(T::neg_infinity(), T::max);
    let span = hi - lo;
    if span <= T::zero() {
        return Image::filled(img.height(), img.width(), img.channels(), T::c(0.5));
    }
    img.map(|v| (v - lo) / span)
}

/// Separable convolution with the level-`level` kernel.
pub fn smooth_level<T: Scalar>(img: &Image<T>, level: usize, boundary: Boundary) -> Image<T> {
    let step = 1isize << (level - 1);
    let taps = B3_TAPS.map(T::c);
    let (h, w) = (img.height(), img.width());
    let mut out = Image::zeros_like(img);
    let mut tmp = vec![T::zero(); h * w];
    let offsets: Vec<isize> = (-2..=2).map(|k| k * step).collect();
    for c in 0..img.channels() {
        let src = img.plane(c);
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            let t_row = &mut tmp[y * w..(y + 1) * w];
            for (x, t) in t_row.iter_mut().enumerate() {
                let mut acc = T::zero();
                for (&k, &o) in taps.iter().zip(&offsets) {
                    acc += k * row[boundary.index(x as isize + o, w)];
                }
                *t = acc;
            }
        }
        let dst = out.plane_mut(c);
        for y in 0..h {
            let d_row = &mut dst[y * w..(y + 1) * w];
            for (&k, &o) in taps.iter().zip(&offsets) {
                let sy = boundary.index(y as isize + o, h);
                for (d, &s) in d_row.iter_mut().zip(&tmp[sy * w..(sy + 1) * w]) {
                    *d += k * s;
                }
            }
        }
    }
    out
}

/// Decomposition with mirror boundaries.
pub fn atrous_decompose<T: Scalar>(x: &Image<T>, levels: usize) -> Result<AtrousPyramid<T>> {
    atrous_decompose_with(x, levels, Boundary::Mirror)
}

pub fn atrous_decompose_with<T: Scalar>(x: &Image<T>, levels: usize, boundary: Boundary) -> Result<AtrousPyramid<T>> {
    if levels < 1 {
        return Err(Error::invalid("wavelet levels must be at least 1"));
    }
    if x.is_empty() {
        return Err(Error::invalid("cannot decompose an empty image"));
    }
    let mut smooth = vec![x.clone()];
    let mut details = Vec::with_capacity(levels);
    for s in 1..=levels {
        let next = smooth_level(&smooth[s - 1], s, boundary);
        details.push(smooth[s - 1].sub(&next)?);
        smooth.push(next);
    }
    Ok(AtrousPyramid { smooth, details })
}

/// `c(S) + w(S) + ... + w(1)`.
pub fn reconstruct<T: Scalar>(p: &AtrousPyramid<T>) -> Image<T> {
    let mut acc = p.coarsest().clone();
    for s in (1..=p.levels()).rev() {
        acc.add_scaled(p.detail(s), T::one()).expect("pyramid planes share a shape");
    }
    acc
}

/// Clean diffusion targets: `x(0) = c(S)` and `x(s) = c(S) + d * (w(1) + ... + w(s))`.
pub fn partial_targets<T: Scalar>(p: &AtrousPyramid<T>, detail_gain: f64) -> Result<Vec<Image<T>>> {
    if !(detail_gain > 0.0 && detail_gain.is_finite()) {
        return Err(Error::invalid(format!("detail gain {detail_gain} must be > 0")));
    }
    let d = T::c(detail_gain);
    let mut sum = Image::zeros_like(p.coarsest());
    let mut out = Vec::with_capacity(p.levels() + 1);
    out.push(p.coarsest().clone());
    for s in 1..=p.levels() {
        sum.add_scaled(p.detail(s), T::one())?;
        let mut target = p.coarsest().clone();
        target.add_scaled(&sum, d)?;
        out.push(target);
    }
    Ok(out)
}
