//! Separable linear resampling with an exact transpose.
//!
//! Every resampling operator here is the tensor product of two 1D maps stored
//! as sparse weight rows. Applying the rows gathers; applying their transpose
//! scatters the same weights, so `degrade_adjoint` is exact by construction.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

/// Keys cubic convolution parameter (Catmull-Rom).
pub const CUBIC_A: f64 = -0.5;

/// Out-of-range handling for kernel taps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Half-sample symmetric reflection: `x[-1] = x[0]`, period `2n`.
    #[default]
    Mirror,
    Periodic,
}

impl Boundary {
    #[inline]
    pub fn index(self, i: isize, n: usize) -> usize {
        let n = n as isize;
        match self {
            Boundary::Mirror => {
                let p = 2 * n;
                let m = i.rem_euclid(p);
                (if m >= n { p - 1 - m } else { m }) as usize
            }
            Boundary::Periodic => i.rem_euclid(n) as usize,
        }
    }
}

/// Keys cubic convolution kernel.
#[inline]
pub fn cubic_kernel(x: f64) -> f64 {
    let a = CUBIC_A;
    let x = x.abs();
    if x <= 1.0 {
        (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a
    } else {
        0.0
    }
}

/// Source coordinate of output sample `o` when mapping `in_len` samples onto `out_len`
/// with pixel centers aligned.
#[inline]
pub fn source_coord(o: usize, in_len: usize, out_len: usize) -> f64 {
    (o as f64 + 0.5) * (in_len as f64 / out_len as f64) - 0.5
}

/// Sparse `out_len x in_len` matrix in compressed row form.
#[derive(Debug, Clone)]
pub struct LinearMap1d<T> {
    in_len: usize,
    out_len: usize,
    row_start: Vec<usize>,
    index: Vec<usize>,
    weight: Vec<T>,
}

impl<T: Scalar> LinearMap1d<T> {
    fn from_rows(in_len: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let out_len = rows.len();
        let mut row_start = Vec::with_capacity(out_len + 1);
        let mut index = Vec::new();
        let mut weight = Vec::new();
        row_start.push(0);
        for row in rows {
            // fold mirrored taps onto their source sample
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (i, w) in row {
                match merged.iter_mut().find(|(j, _)| *j == i) {
                    Some(entry) => entry.1 += w,
                    None => merged.push((i, w)),
                }
            }
            merged.sort_by_key(|&(i, _)| i);
            for (i, w) in merged {
                if w != 0.0 {
                    index.push(i);
                    weight.push(T::c(w));
                }
            }
            row_start.push(index.len());
        }
        LinearMap1d { in_len, out_len, row_start, index, weight }
    }

    /// Cubic resampling from `in_len` to `out_len` samples. When shrinking, the
    /// kernel is stretched by the size ratio (antialiasing); each row is
    /// normalized to unit sum.
    pub fn bicubic(in_len: usize, out_len: usize, boundary: Boundary) -> Self {
        let ratio = in_len as f64 / out_len as f64;
        let stretch = ratio.max(1.0);
        let support = 2.0 * stretch;
        let rows = (0..out_len)
            .map(|o| {
                let center = source_coord(o, in_len, out_len);
                let lo = (center - support).floor() as isize;
                let hi = (center + support).ceil() as isize;
                let mut taps: Vec<(isize, f64)> =
                    (lo..=hi).map(|i| (i, cubic_kernel((i as f64 - center) / stretch))).collect();
                let total: f64 = taps.iter().map(|t| t.1).sum();
                for t in &mut taps {
                    t.1 /= total;
                }
                taps.into_iter().map(|(i, w)| (boundary.index(i, in_len), w)).collect()
            })
            .collect();
        Self::from_rows(in_len, rows)
    }

    /// Gaussian blur (normalized, radius `ceil(3 sigma)`) followed by picking
    /// sample `floor((o + 0.5) * in_len / out_len)` for output `o`.
    pub fn blur_subsample(in_len: usize, out_len: usize, sigma: f64, boundary: Boundary) -> Self {
        let kernel = gaussian_taps(sigma);
        let radius = (kernel.len() / 2) as isize;
        let ratio = in_len as f64 / out_len as f64;
        let rows = (0..out_len)
            .map(|o| {
                let p = (((o as f64 + 0.5) * ratio).floor() as usize).min(in_len - 1) as isize;
                kernel.iter().enumerate().map(|(k, &w)| (boundary.index(p + k as isize - radius, in_len), w)).collect()
            })
            .collect();
        Self::from_rows(in_len, rows)
    }

    /// Arbitrary convolution with a centered odd-length kernel, no subsampling.
    pub fn convolution(len: usize, kernel: &[f64], boundary: Boundary) -> Self {
        assert!(kernel.len() % 2 == 1, "kernel length must be odd");
        let radius = (kernel.len() / 2) as isize;
        let rows = (0..len)
            .map(|o| {
                kernel
                    .iter()
                    .enumerate()
                    .map(|(k, &w)| (boundary.index(o as isize + k as isize - radius, len), w))
                    .collect()
            })
            .collect();
        Self::from_rows(len, rows)
    }

    pub fn in_len(&self) -> usize {
        self.in_len
    }

    pub fn out_len(&self) -> usize {
        self.out_len
    }

    pub fn row(&self, o: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_start[o]..self.row_start[o + 1];
        self.index[r.clone()].iter().copied().zip(self.weight[r].iter().copied())
    }

    /// Dense row-major copy, for tests and diagnostics.
    pub fn to_dense(&self) -> Vec<Vec<T>> {
        (0..self.out_len)
            .map(|o| {
                let mut row = vec![T::zero(); self.in_len];
                for (i, w) in self.row(o) {
                    row[i] += w;
                }
                row
            })
            .collect()
    }
}

pub(crate) fn gaussian_taps(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-radius..=radius).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= total;
    }
    taps
}

/// A pair of 1D maps applied along columns (`x`) then rows (`y`) of every channel.
#[derive(Debug, Clone)]
pub struct Separable<T> {
    pub rows: LinearMap1d<T>,
    pub cols: LinearMap1d<T>,
}

impl<T: Scalar> Separable<T> {
    pub fn new(rows: LinearMap1d<T>, cols: LinearMap1d<T>) -> Self {
        Separable { rows, cols }
    }

    pub fn in_dims(&self) -> (usize, usize) {
        (self.rows.in_len, self.cols.in_len)
    }

    pub fn out_dims(&self) -> (usize, usize) {
        (self.rows.out_len, self.cols.out_len)
    }

    pub fn apply(&self, img: &Image<T>) -> Result<Image<T>> {
        let (ih, iw) = self.in_dims();
        check_dims(img, ih, iw)?;
        let (oh, ow) = self.out_dims();
        let mut out = Image::zeros(oh, ow, img.channels());
        let mut tmp = vec![T::zero(); ih * ow];
        for c in 0..img.channels() {
            let src = img.plane(c);
            for y in 0..ih {
                let row = &src[y * iw..(y + 1) * iw];
                for o in 0..ow {
                    tmp[y * ow + o] = self.cols.row(o).map(|(i, w)| w * row[i]).sum();
                }
            }
            let dst = out.plane_mut(c);
            for o in 0..oh {
                let out_row = &mut dst[o * ow..(o + 1) * ow];
                for (i, w) in self.rows.row(o) {
                    let in_row = &tmp[i * ow..(i + 1) * ow];
                    for (d, &s) in out_row.iter_mut().zip(in_row) {
                        *d += w * s;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Exact transpose of [`Separable::apply`].
    pub fn apply_transpose(&self, img: &Image<T>) -> Result<Image<T>> {
        let (oh, ow) = self.out_dims();
        check_dims(img, oh, ow)?;
        let (ih, iw) = self.in_dims();
        let mut out = Image::zeros(ih, iw, img.channels());
        let mut tmp = vec![T::zero(); ih * ow];
        for c in 0..img.channels() {
            tmp.iter_mut().for_each(|v| *v = T::zero());
            let src = img.plane(c);
            for o in 0..oh {
                let in_row = &src[o * ow..(o + 1) * ow];
                for (i, w) in self.rows.row(o) {
                    let t_row = &mut tmp[i * ow..(i + 1) * ow];
                    for (d, &s) in t_row.iter_mut().zip(in_row) {
                        *d += w * s;
                    }
                }
            }
            let dst = out.plane_mut(c);
            for y in 0..ih {
                let t_row = &tmp[y * ow..(y + 1) * ow];
                let d_row = &mut dst[y * iw..(y + 1) * iw];
                for (o, &v) in t_row.iter().enumerate() {
                    for (i, w) in self.cols.row(o) {
                        d_row[i] += w * v;
                    }
                }
            }
        }
        Ok(out)
    }
}

fn check_dims<T: Scalar>(img: &Image<T>, h: usize, w: usize) -> Result<()> {
    if img.height() != h || img.width() != w {
        return Err(Error::ShapeMismatch {
            expected: crate::image::Shape::new(h, w, img.channels()),
            got: img.shape(),
        });
    }
    Ok(())
}

/// Cubic resampling of every channel onto an `out_h x out_w` grid.
///
/// No clamping is applied; values may overshoot [0, 1] near edges.
pub fn bicubic_resample<T: Scalar>(img: &Image<T>, out_h: usize, out_w: usize) -> Result<Image<T>> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid(format!("target size {out_h}x{out_w} must be at least 1x1")));
    }
    if img.is_empty() {
        return Err(Error::invalid("cannot resample an empty image"));
    }
    let op = Separable::new(
        LinearMap1d::bicubic(img.height(), out_h, Boundary::Mirror),
        LinearMap1d::bicubic(img.width(), out_w, Boundary::Mirror),
    );
    op.apply(img)
}
