//! PSNR and single-scale SSIM.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    /// `+inf` for identical inputs.
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MetricOptions {
    /// Compare BT.601 luma instead of averaging over channels.
    pub y_channel: bool,
    /// Pixels dropped from every edge before comparison.
    pub crop_border: usize,
}

/// `10 log10(peak^2 / MSE)` over all pixels and channels.
pub fn psnr<T: Scalar>(a: &Image<T>, b: &Image<T>, peak: f64) -> Result<f64> {
    a.ensure_same_shape(b)?;
    if a.is_empty() {
        return Err(Error::invalid("PSNR of empty images"));
    }
    let sse: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum();
    let mse = sse / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Separable weighted sum over every fully interior window.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let k = gaussian_window();
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let prod = |f: fn(f64, f64) -> f64| -> Vec<f64> { a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect() };
    let mu_a = filter_valid(a, h, w, &k);
    let mu_b = filter_valid(b, h, w, &k);
    let aa = filter_valid(&prod(|x, _| x * x), h, w, &k);
    let bb = filter_valid(&prod(|_, y| y * y), h, w, &k);
    let ab = filter_valid(&prod(|x, y| x * y), h, w, &k);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total / mu_a.len() as f64
}

/// Mean SSIM over valid 11x11 Gaussian windows, averaged over channels. Peak 1.
pub fn ssim<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let (h, w) = (a.height(), a.width());
    if h.min(w) < SSIM_WINDOW {
        return Err(Error::invalid(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}")));
    }
    let mut sum = 0.0;
    for c in 0..a.channels() {
        let pa: Vec<f64> = a.plane(c).iter().map(|v| v.as_f64()).collect();
        let pb: Vec<f64> = b.plane(c).iter().map(|v| v.as_f64()).collect();
        sum += ssim_plane(&pa, &pb, h, w);
    }
    Ok(sum / a.channels() as f64)
}

/// BT.601 luma of an RGB image; single-channel images pass through.
pub fn luma<T: Scalar>(img: &Image<T>) -> Result<Image<T>> {
    match img.channels() {
        1 => Ok(img.clone()),
        3 => {
            let (r, g, b) = (T::c(0.299), T::c(0.587), T::c(0.114));
            Ok(Image::from_fn(img.height(), img.width(), 1, |_, y, x| {
                r * img.get(0, y, x) + g * img.get(1, y, x) + b * img.get(2, y, x)
            }))
        }
        n => Err(Error::invalid(format!("luma needs 1 or 3 channels, got {n}"))),
    }
}

fn prepare<T: Scalar>(img: &Image<T>, opts: &MetricOptions) -> Result<Image<T>> {
    let img = if opts.y_channel { luma(img)? } else { img.clone() };
    let b = opts.crop_border;
    if b == 0 {
        return Ok(img);
    }
    if 2 * b >= img.height().min(img.width()) {
        return Err(Error::invalid(format!("crop border {b} removes the whole {}", img.shape())));
    }
    img.crop(b, b, img.height() - 2 * b, img.width() - 2 * b)
}

pub fn evaluate<T: Scalar>(estimate: &Image<T>, truth: &Image<T>) -> Result<MetricReport> {
    evaluate_with(estimate, truth, &MetricOptions::default())
}

pub fn evaluate_with<T: Scalar>(estimate: &Image<T>, truth: &Image<T>, opts: &MetricOptions) -> Result<MetricReport> {
    estimate.ensure_same_shape(truth)?;
    let a = prepare(estimate, opts)?;
    let b = prepare(truth, opts)?;
    Ok(MetricReport { psnr: psnr(&a, &b, 1.0)?, ssim: ssim(&a, &b)? })
}

/// Formats a metric for CSV output; infinite PSNR becomes `inf`.
pub fn format_metric(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.6}")
    }
}
