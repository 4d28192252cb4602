//! Independent reference evaluators shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use atrous_sr::{degrade, degrade_adjoint, stream_rng, DegradationMode, DegradationModel, Image, ImageF64, Stream};
use rand::Rng;

pub fn random(h: usize, w: usize, c: usize, seed: u64) -> ImageF64 {
    let mut rng = stream_rng(seed, Stream::NoiseSynthesis);
    Image::from_fn(h, w, c, |_, _, _| rng.random::<f64>())
}

pub fn max_diff(a: &ImageF64, b: &ImageF64) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Circular shift by `(dy, dx)`.
pub fn roll(x: &ImageF64, dy: usize, dx: usize) -> ImageF64 {
    let (h, w) = (x.height(), x.width());
    Image::from_fn(h, w, x.channels(), |c, y, xx| x.get(c, (y + h - dy) % h, (xx + w - dx) % w))
}

/// Keys cubic with a = -0.5, written out independently of the library.
pub fn keys(x: f64) -> f64 {
    let x = x.abs();
    if x < 1.0 {
        1.5 * x.powi(3) - 2.5 * x * x + 1.0
    } else if x < 2.0 {
        -0.5 * x.powi(3) + 2.5 * x * x - 4.0 * x + 2.0
    } else {
        0.0
    }
}

/// Half-sample symmetric reflection by repeated folding.
pub fn reflect(i: i64, n: i64) -> usize {
    let mut i = i;
    while i < 0 || i >= n {
        i = if i < 0 { -1 - i } else { 2 * n - 1 - i };
    }
    i as usize
}

/// Normalized cubic taps for one output coordinate, as (source index, weight).
pub fn cubic_taps(o: usize, n_in: usize, n_out: usize) -> Vec<(usize, f64)> {
    let ratio = n_in as f64 / n_out as f64;
    let stretch = if ratio > 1.0 { ratio } else { 1.0 };
    let c = (o as f64 + 0.5) * ratio - 0.5;
    let mut out = Vec::new();
    let mut i = (c - 2.0 * stretch).floor() as i64 - 1;
    while (i as f64) <= c + 2.0 * stretch + 1.0 {
        let w = keys((i as f64 - c) / stretch);
        if w != 0.0 {
            out.push((reflect(i, n_in as i64), w));
        }
        i += 1;
    }
    let total: f64 = out.iter().map(|t| t.1).sum();
    out.iter().map(|&(i, w)| (i, w / total)).collect()
}

/// Gaussian taps around the picked sample `floor((o + 0.5) n_in / n_out)`.
pub fn blur_taps(o: usize, n_in: usize, n_out: usize, sigma: f64) -> Vec<(usize, f64)> {
    let centre = (((o as f64 + 0.5) * n_in as f64 / n_out as f64).floor() as i64).min(n_in as i64 - 1);
    if sigma == 0.0 {
        return vec![(centre as usize, 1.0)];
    }
    let r = (3.0 * sigma).ceil() as i64;
    let raw: Vec<(usize, f64)> = (-r..=r)
        .map(|k| (reflect(centre + k, n_in as i64), (-((k * k) as f64) / (2.0 * sigma * sigma)).exp()))
        .collect();
    let total: f64 = raw.iter().map(|t| t.1).sum();
    raw.into_iter().map(|(i, w)| (i, w / total)).collect()
}

/// Evaluates every output pixel of `D(x)` as an explicit 2D weighted sum.
pub fn naive_degrade(x: &ImageF64, model: &DegradationModel) -> ImageF64 {
    let (oh, ow) = model.lr_dims(x.height(), x.width());
    naive_resample(x, oh, ow, model)
}

pub fn naive_resample(x: &ImageF64, oh: usize, ow: usize, model: &DegradationModel) -> ImageF64 {
    let taps = |o: usize, n_in: usize, n_out: usize| match model.mode {
        DegradationMode::BicubicDownsample => cubic_taps(o, n_in, n_out),
        DegradationMode::GaussianBlurThenSubsample => blur_taps(o, n_in, n_out, model.blur_sigma),
    };
    Image::from_fn(oh, ow, x.channels(), |c, oy, ox| {
        let mut acc = 0.0;
        for &(iy, wy) in &taps(oy, x.height(), oh) {
            for &(ix, wx) in &taps(ox, x.width(), ow) {
                acc += wy * wx * x.get(c, iy, ix);
            }
        }
        acc
    })
}

/// Largest eigenvalue of `D^T D` on an `h x w` grid by power iteration.
pub fn operator_norm_sq(model: &DegradationModel, h: usize, w: usize, iterations: usize) -> f64 {
    let mut v = random(h, w, 1, 77);
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let norm = v.sum_sq().sqrt();
        v = v.scale(1.0 / norm);
        let dv = degrade(&v, model).unwrap();
        let next = degrade_adjoint(&dv, model, h, w).unwrap();
        lambda = v.dot(&next).unwrap();
        v = next;
    }
    lambda
}

/// Direct sliding-window SSIM with a non-separable 2D Gaussian.
pub fn naive_ssim(a: &ImageF64, b: &ImageF64) -> f64 {
    let n = 11;
    let mut g = vec![vec![0.0; n]; n];
    let mut total = 0.0;
    for (i, row) in g.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut per_channel = 0.0;
    for c in 0..a.channels() {
        let mut acc = 0.0;
        let mut count = 0;
        for y in 0..=a.height() - n {
            for x in 0..=a.width() - n {
                let (mut ma, mut mb) = (0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let wgt = g[i][j] / total;
                        ma += wgt * a.get(c, y + i, x + j);
                        mb += wgt * b.get(c, y + i, x + j);
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let wgt = g[i][j] / total;
                        let (da, db) = (a.get(c, y + i, x + j) - ma, b.get(c, y + i, x + j) - mb);
                        va += wgt * da * da;
                        vb += wgt * db * db;
                        cov += wgt * da * db;
                    }
                }
                acc += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        per_channel += acc / count as f64;
    }
    per_channel / a.channels() as f64
}

/// Scalar Adam recurrence with bias correction.
pub fn adam_oracle(mut x: f64, grads: &[f64], lr: f64, beta1: f64, beta2: f64, eps: f64) -> f64 {
    let (mut m, mut v) = (0.0, 0.0);
    for (k, &g) in grads.iter().enumerate() {
        let n = (k + 1) as i32;
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        let mh = m / (1.0 - beta1.powi(n));
        let vh = v / (1.0 - beta2.powi(n));
        x -= lr * mh / (vh.sqrt() + eps);
    }
    x
}
