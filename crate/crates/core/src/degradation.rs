//! Observation model `y = D(x) + n` and the transpose of `D`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::resample::{Boundary, LinearMap1d, Separable};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DegradationMode {
    #[default]
    BicubicDownsample,
    GaussianBlurThenSubsample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationModel {
    pub scale_factor: f64,
    pub mode: DegradationMode,
    /// Gaussian std in HR pixels; blur mode only.
    pub blur_sigma: f64,
    /// Std of the additive noise used when synthesizing observations.
    pub noise_sigma: f64,
}

impl Default for DegradationModel {
    fn default() -> Self {
        DegradationModel {
            scale_factor: 4.0,
            mode: DegradationMode::BicubicDownsample,
            blur_sigma: 0.0,
            noise_sigma: 0.0,
        }
    }
}

// Guards floor(H / f) against representation error, e.g. 126 / 3.15.
const SIZE_EPS: f64 = 1e-9;

impl DegradationModel {
    pub fn bicubic(scale_factor: f64) -> Self {
        DegradationModel { scale_factor, ..Default::default() }
    }

    pub fn blur(scale_factor: f64, blur_sigma: f64) -> Self {
        DegradationModel {
            scale_factor,
            mode: DegradationMode::GaussianBlurThenSubsample,
            blur_sigma,
            noise_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale_factor.is_finite() && self.scale_factor > 1.0) {
            return Err(Error::invalid(format!("scale factor {} must exceed 1", self.scale_factor)));
        }
        if !(self.blur_sigma >= 0.0 && self.blur_sigma.is_finite()) {
            return Err(Error::invalid(format!("blur sigma {} must be >= 0", self.blur_sigma)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid(format!("noise sigma {} must be >= 0", self.noise_sigma)));
        }
        Ok(())
    }

    /// LR size produced from an HR image of `hr_h x hr_w`: `floor(n / f)`.
    pub fn lr_dims(&self, hr_h: usize, hr_w: usize) -> (usize, usize) {
        let f = |n: usize| (n as f64 / self.scale_factor + SIZE_EPS).floor() as usize;
        (f(hr_h), f(hr_w))
    }

    /// HR grid for an LR observation of `lr_h x lr_w`: `round(n * f)`.
    pub fn hr_dims(&self, lr_h: usize, lr_w: usize) -> (usize, usize) {
        let f = |n: usize| (n as f64 * self.scale_factor).round() as usize;
        (f(lr_h), f(lr_w))
    }

    /// The linear part of the model as a separable operator on an HR grid.
    pub fn operator<T: Scalar>(&self, hr_h: usize, hr_w: usize) -> Result<Separable<T>> {
        self.validate()?;
        let (lh, lw) = self.lr_dims(hr_h, hr_w);
        if lh == 0 || lw == 0 {
            return Err(Error::invalid(format!(
                "degrading {hr_h}x{hr_w} by {} leaves an empty image",
                self.scale_factor
            )));
        }
        let b = Boundary::Mirror;
        Ok(match self.mode {
            DegradationMode::BicubicDownsample => {
                Separable::new(LinearMap1d::bicubic(hr_h, lh, b), LinearMap1d::bicubic(hr_w, lw, b))
            }
            DegradationMode::GaussianBlurThenSubsample => Separable::new(
                LinearMap1d::blur_subsample(hr_h, lh, self.blur_sigma, b),
                LinearMap1d::blur_subsample(hr_w, lw, self.blur_sigma, b),
            ),
        })
    }
}

/// Noise-free `D(x)`.
pub fn degrade<T: Scalar>(x: &Image<T>, model: &DegradationModel) -> Result<Image<T>> {
    model.operator(x.height(), x.width())?.apply(x)
}

/// `D(x) + n` with `n ~ N(0, noise_sigma^2)` drawn from `rng`.
pub fn degrade_noisy<T: Scalar, R: Rng + ?Sized>(
    x: &Image<T>,
    model: &DegradationModel,
    rng: &mut R,
) -> Result<Image<T>> {
    let mut y = degrade(x, model)?;
    if model.noise_sigma > 0.0 {
        let n = Image::randn(y.height(), y.width(), y.channels(), rng);
        y.add_scaled(&n, T::c(model.noise_sigma))?;
    }
    Ok(y)
}

/// `D^T r` on an `out_h x out_w` HR grid.
pub fn degrade_adjoint<T: Scalar>(
    r: &Image<T>,
    model: &DegradationModel,
    out_h: usize,
    out_w: usize,
) -> Result<Image<T>> {
    let op = model.operator(out_h, out_w)?;
    let (lh, lw) = op.out_dims();
    r.ensure_shape(Shape::new(lh, lw, r.channels()))?;
    op.apply_transpose(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Image<f64> {
        Image::from_fn(h, w, 1, |_, y, x| (y * w + x) as f64)
    }

    #[test]
    fn constant_stays_constant() {
        let img = Image::<f64>::filled(12, 12, 3, 0.3);
        for model in [DegradationModel::bicubic(2.0), DegradationModel::blur(3.0, 1.2)] {
            let y = degrade(&img, &model).unwrap();
            assert_eq!(y.shape(), Shape::new(12 / model.scale_factor as usize, 12 / model.scale_factor as usize, 3));
            assert!(y.data().iter().all(|&v| (v - 0.3).abs() < 1e-14));
        }
    }

    #[test]
    fn zero_blur_point_samples() {
        let y = degrade(&ramp(4, 4), &DegradationModel::blur(2.0, 0.0)).unwrap();
        assert_eq!(y.data(), &[5.0, 7.0, 13.0, 15.0]);
    }

    #[test]
    fn adjoint_of_point_sampling() {
        let r = Image::<f64>::filled(1, 1, 1, 2.5);
        let up = degrade_adjoint(&r, &DegradationModel::blur(2.0, 0.0), 2, 2).unwrap();
        assert_eq!(up.data(), &[0.0, 0.0, 0.0, 2.5]);
    }

    #[test]
    fn adjoint_of_zero_is_zero() {
        let r = Image::<f64>::zeros(4, 4, 2);
        let up = degrade_adjoint(&r, &DegradationModel::bicubic(2.0), 8, 8).unwrap();
        assert!(up.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_checks_dims() {
        let r = Image::<f64>::zeros(3, 4, 1);
        assert!(matches!(degrade_adjoint(&r, &DegradationModel::bicubic(2.0), 8, 8), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn non_integer_dims() {
        let m = DegradationModel::bicubic(3.15);
        assert_eq!(m.hr_dims(40, 40), (126, 126));
        assert_eq!(m.lr_dims(126, 126), (40, 40));
        assert_eq!(DegradationModel::bicubic(2.0).lr_dims(33, 7), (16, 3));
    }

    #[test]
    fn invalid_models() {
        assert!(DegradationModel::bicubic(1.0).validate().is_err());
        assert!(DegradationModel::blur(2.0, -1.0).validate().is_err());
        assert!(degrade(&Image::<f64>::zeros(1, 1, 1), &DegradationModel::bicubic(2.0)).is_err());
    }

    #[test]
    fn noise_uses_rng() {
        use crate::rng::{stream_rng, Stream};
        let x = Image::<f64>::filled(8, 8, 1, 0.5);
        let mut model = DegradationModel::bicubic(2.0);
        model.noise_sigma = 0.1;
        let a = degrade_noisy(&x, &model, &mut stream_rng(1, Stream::NoiseSynthesis)).unwrap();
        let b = degrade_noisy(&x, &model, &mut stream_rng(1, Stream::NoiseSynthesis)).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().any(|&v| (v - 0.5).abs() > 1e-3));
    }
}
