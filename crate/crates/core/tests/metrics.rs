use atrous_sr::metrics::{format_metric, luma};
use atrous_sr::{evaluate, evaluate_with, psnr, ssim, Image, ImageF64, MetricOptions};

mod common;
use common::{naive_ssim, random};

#[test]
fn ssim_matches_sliding_window_oracle() {
    for (c, seed) in [(1, 1), (3, 2)] {
        let a = random(32, 32, c, seed);
        let b = a.zip_map(&random(32, 32, c, seed + 10), |x, n| 0.7 * x + 0.3 * n).unwrap();
        let got = ssim(&a, &b).unwrap();
        let want = naive_ssim(&a, &b);
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}

#[test]
fn psnr_closed_form() {
    let a = random(9, 7, 3, 3).map(|v| v * 0.5);
    let b = a.map(|v| v + 16.0 / 255.0);
    let p = psnr(&a, &b, 1.0).unwrap();
    // MSE = (16/255)^2, so PSNR = 20 log10(255/16) = 24.0484 dB.
    assert!((p - 20.0 * (255.0f64 / 16.0).log10()).abs() < 1e-10);
    assert!((p - 24.0484).abs() < 5e-5, "{p}");
}

#[test]
fn identical_images() {
    let a = random(16, 16, 3, 4);
    let r = evaluate(&a, &a).unwrap();
    assert_eq!(r.psnr, f64::INFINITY);
    assert_eq!(r.ssim, 1.0);
    assert_eq!(format_metric(r.psnr), "inf");
}

#[test]
fn psnr_is_symmetric() {
    for seed in 0..10 {
        let (a, b) = (random(12, 13, 1, seed), random(12, 13, 1, seed + 50));
        assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
    }
}

#[test]
fn inverted_binary_image_has_negative_ssim() {
    let a = Image::from_fn(24, 24, 1, |_, y, x| if (x / 3 + y / 3) % 2 == 0 { 1.0 } else { 0.0 });
    let inv = a.map(|v| 1.0 - v);
    assert!(ssim(&a, &inv).unwrap() < 0.0);
}

#[test]
fn small_images_are_rejected() {
    let a = random(10, 30, 1, 5);
    assert!(ssim(&a, &a).is_err());
}

#[test]
fn luma_and_border_options() {
    let a = random(20, 20, 3, 6);
    let b = random(20, 20, 3, 7);
    let opts = MetricOptions { y_channel: true, crop_border: 2 };
    let r = evaluate_with(&a, &b, &opts).unwrap();
    let (ya, yb) = (luma(&a).unwrap(), luma(&b).unwrap());
    let crop = |i: &ImageF64| i.crop(2, 2, 16, 16).unwrap();
    assert_eq!(r.psnr, psnr(&crop(&ya), &crop(&yb), 1.0).unwrap());
    assert_eq!(r.ssim, ssim(&crop(&ya), &crop(&yb)).unwrap());
    assert!(
        (ya.get(0, 3, 4) - (0.299 * a.get(0, 3, 4) + 0.587 * a.get(1, 3, 4) + 0.114 * a.get(2, 3, 4))).abs() < 1e-15
    );
}
