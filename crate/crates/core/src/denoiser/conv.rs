//! 3x3 same-size convolution kernels on planar feature maps.
//! The kernels take flat slices plus their sizes, hence the long argument lists.
#![allow(clippy::too_many_arguments)]

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Padding {
    #[default]
    Zero,
    Periodic,
}

impl Padding {
    pub fn code(self) -> u8 {
        match self {
            Padding::Zero => 0,
            Padding::Periodic => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Padding::Zero),
            1 => Some(Padding::Periodic),
            _ => None,
        }
    }
}

/// Column segments `(dst_start, src_start, len)` covering `dst[x] <- src[x + dx]`.
#[inline]
fn col_segments(w: usize, dx: isize, padding: Padding) -> ([(usize, usize, usize); 2], usize) {
    let wi = w as isize;
    match padding {
        Padding::Zero => {
            let lo = (-dx).max(0);
            let hi = (wi - dx).min(wi);
            if hi <= lo {
                ([(0, 0, 0); 2], 0)
            } else {
                ([(lo as usize, (lo + dx) as usize, (hi - lo) as usize), (0, 0, 0)], 1)
            }
        }
        Padding::Periodic => {
            let s = dx.rem_euclid(wi) as usize;
            if s == 0 {
                ([(0, 0, w), (0, 0, 0)], 1)
            } else {
                ([(0, s, w - s), (w - s, 0, s)], 2)
            }
        }
    }
}

#[inline]
fn src_row(y: usize, h: usize, dy: isize, padding: Padding) -> Option<usize> {
    let sy = y as isize + dy;
    match padding {
        Padding::Zero => (sy >= 0 && sy < h as isize).then_some(sy as usize),
        Padding::Periodic => Some(sy.rem_euclid(h as isize) as usize),
    }
}

/// `dst[y][x] += k * src[y + dy][x + dx]` over one plane.
#[inline]
pub fn shift_accumulate<T: Scalar>(
    dst: &mut [T],
    src: &[T],
    h: usize,
    w: usize,
    dy: isize,
    dx: isize,
    k: T,
    padding: Padding,
) {
    let (segs, n) = col_segments(w, dx, padding);
    for y in 0..h {
        let Some(sy) = src_row(y, h, dy, padding) else { continue };
        let d_row = &mut dst[y * w..(y + 1) * w];
        let s_row = &src[sy * w..(sy + 1) * w];
        for &(d0, s0, len) in &segs[..n] {
            for (d, &s) in d_row[d0..d0 + len].iter_mut().zip(&s_row[s0..s0 + len]) {
                *d += k * s;
            }
        }
    }
}

/// `sum_{y,x} a[y][x] * b[y + dy][x + dx]`.
#[inline]
pub fn shifted_dot<T: Scalar>(a: &[T], b: &[T], h: usize, w: usize, dy: isize, dx: isize, padding: Padding) -> T {
    let (segs, n) = col_segments(w, dx, padding);
    let mut acc = T::zero();
    for y in 0..h {
        let Some(sy) = src_row(y, h, dy, padding) else { continue };
        let a_row = &a[y * w..(y + 1) * w];
        let b_row = &b[sy * w..(sy + 1) * w];
        for &(d0, s0, len) in &segs[..n] {
            let mut part = T::zero();
            for (&x, &y) in a_row[d0..d0 + len].iter().zip(&b_row[s0..s0 + len]) {
                part += x * y;
            }
            acc += part;
        }
    }
    acc
}

/// Forward 3x3 convolution. `weight` is `[cout][cin][3][3]`, planes are `h * w`.
pub fn conv3x3_forward<T: Scalar>(
    input: &[T],
    cin: usize,
    weight: &[T],
    bias: &[T],
    cout: usize,
    h: usize,
    w: usize,
    padding: Padding,
    out: &mut [T],
) {
    let n = h * w;
    for o in 0..cout {
        let dst = &mut out[o * n..(o + 1) * n];
        dst.iter_mut().for_each(|v| *v = bias[o]);
        for i in 0..cin {
            let src = &input[i * n..(i + 1) * n];
            let k = &weight[(o * cin + i) * 9..(o * cin + i + 1) * 9];
            for (tap, &kv) in k.iter().enumerate() {
                if kv == T::zero() {
                    continue;
                }
                let dy = (tap / 3) as isize - 1;
                let dx = (tap % 3) as isize - 1;
                shift_accumulate(dst, src, h, w, dy, dx, kv, padding);
            }
        }
    }
}

/// Gradients of a 3x3 convolution. Accumulates into `d_weight`, `d_bias` and,
/// when given, `d_input`.
pub fn conv3x3_backward<T: Scalar>(
    input: &[T],
    cin: usize,
    weight: &[T],
    cout: usize,
    h: usize,
    w: usize,
    padding: Padding,
    d_out: &[T],
    d_weight: &mut [T],
    d_bias: &mut [T],
    mut d_input: Option<&mut [T]>,
) {
    let n = h * w;
    for o in 0..cout {
        let g = &d_out[o * n..(o + 1) * n];
        d_bias[o] += g.iter().copied().sum::<T>();
        for i in 0..cin {
            let src = &input[i * n..(i + 1) * n];
            let base = (o * cin + i) * 9;
            for tap in 0..9 {
                let dy = (tap / 3) as isize - 1;
                let dx = (tap % 3) as isize - 1;
                d_weight[base + tap] += shifted_dot(g, src, h, w, dy, dx, padding);
                if let Some(di) = d_input.as_deref_mut() {
                    let kv = weight[base + tap];
                    if kv != T::zero() {
                        shift_accumulate(&mut di[i * n..(i + 1) * n], g, h, w, -dy, -dx, kv, padding);
                    }
                }
            }
        }
    }
}
