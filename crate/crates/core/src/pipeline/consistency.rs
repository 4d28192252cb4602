use crate::degradation::DegradationModel;
use crate::error::Result;
use crate::image::{Image, Shape};
use crate::resample::Separable;
use crate::scalar::Scalar;

/// `D` for one HR grid, built once and reused across sampler steps.
#[derive(Debug, Clone)]
pub struct LrConsistency<T> {
    op: Separable<T>,
}

impl<T: Scalar> LrConsistency<T> {
    pub fn new(model: &DegradationModel, hr_h: usize, hr_w: usize) -> Result<Self> {
        Ok(LrConsistency { op: model.operator(hr_h, hr_w)? })
    }

    fn residual(&self, x: &Image<T>, y: &Image<T>) -> Result<Image<T>> {
        let (lh, lw) = self.op.out_dims();
        y.ensure_shape(Shape::new(lh, lw, x.channels()))?;
        self.op.apply(x)?.sub(y)
    }

    /// `||D(x) - y||^2`
    pub fn loss(&self, x: &Image<T>, y: &Image<T>) -> Result<T> {
        Ok(self.residual(x, y)?.sum_sq())
    }

    /// `2 D^T (D(x) - y)`
    pub fn gradient(&self, x: &Image<T>, y: &Image<T>) -> Result<Image<T>> {
        let r = self.residual(x, y)?;
        Ok(self.op.apply_transpose(&r)?.scale(T::c(2.0)))
    }

    pub fn step(&self, x: &Image<T>, y: &Image<T>, eta: f64) -> Result<Image<T>> {
        if eta == 0.0 {
            return Ok(x.clone());
        }
        let g = self.gradient(x, y)?;
        let mut out = x.clone();
        out.add_scaled(&g, T::c(-eta))?;
        Ok(out)
    }
}

pub fn lr_loss<T: Scalar>(x: &Image<T>, y: &Image<T>, model: &DegradationModel) -> Result<T> {
    LrConsistency::new(model, x.height(), x.width())?.loss(x, y)
}

pub fn lr_gradient<T: Scalar>(x: &Image<T>, y: &Image<T>, model: &DegradationModel) -> Result<Image<T>> {
    LrConsistency::new(model, x.height(), x.width())?.gradient(x, y)
}

/// One gradient step on `||D(x) - y||^2` with step size `eta`.
pub fn lr_consistency_step<T: Scalar>(
    x: &Image<T>,
    y: &Image<T>,
    model: &DegradationModel,
    eta: f64,
) -> Result<Image<T>> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(crate::error::Error::invalid(format!("eta {eta} must be >= 0")));
    }
    LrConsistency::new(model, x.height(), x.width())?.step(x, y, eta)
}
