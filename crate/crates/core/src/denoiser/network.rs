use rayon::prelude::*;

use super::conv::{conv3x3_backward, conv3x3_forward};
use super::{Conditioning, DenoiserInput, DenoiserParams};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

/// One supervised pair for the noise-prediction loss.
#[derive(Debug, Clone)]
pub struct TrainingExample<T> {
    pub x_t: Image<T>,
    pub parent: Option<Image<T>>,
    pub t: usize,
    pub scale: usize,
    /// The noise that produced `x_t`.
    pub target: Image<T>,
}

impl<T: Scalar> TrainingExample<T> {
    pub fn input(&self) -> DenoiserInput<'_, T> {
        DenoiserInput { x_t: &self.x_t, parent: self.parent.as_ref(), t: self.t, scale: self.scale }
    }
}

/// Sinusoidal features of `1000 t / T`: sines in the first half, cosines in the second.
pub fn timestep_embedding(t: usize, timesteps: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let pos = 1000.0 * t as f64 / timesteps as f64;
    let mut out = vec![0.0; dim];
    for k in 0..half {
        let freq = (-(10000f64.ln()) * k as f64 / half as f64).exp();
        out[k] = (pos * freq).sin();
        out[half + k] = (pos * freq).cos();
    }
    out
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[inline]
fn silu<T: Scalar>(x: T) -> T {
    x * sigmoid(x)
}

#[inline]
fn silu_grad<T: Scalar>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() + x * (T::one() - s))
}

fn check_input<T: Scalar>(params: &DenoiserParams<T>, inp: &DenoiserInput<'_, T>) -> Result<()> {
    let cfg = params.config();
    if inp.x_t.channels() != cfg.channels {
        return Err(Error::invalid(format!(
            "denoiser expects {} channels, input has {}",
            cfg.channels,
            inp.x_t.channels()
        )));
    }
    if inp.t < 1 || inp.t > cfg.timesteps {
        return Err(Error::invalid(format!("timestep {} outside 1..={}", inp.t, cfg.timesteps)));
    }
    if inp.scale > cfg.levels {
        return Err(Error::invalid(format!("scale {} exceeds the {} trained levels", inp.scale, cfg.levels)));
    }
    match (cfg.conditioning, inp.scale, inp.parent) {
        (Conditioning::Bivariate, 0, Some(_)) => Err(Error::invalid("the coarsest scale takes no parent state")),
        (Conditioning::Bivariate, s, None) if s >= 1 => {
            Err(Error::invalid(format!("scale {s} requires a parent state")))
        }
        (Conditioning::Univariate, _, Some(_)) => Err(Error::invalid("a univariate denoiser takes no parent state")),
        (_, _, Some(p)) => inp.x_t.ensure_same_shape(p),
        _ => Ok(()),
    }
}

struct Embedding<T> {
    /// `sinusoid(t) + e(s)`, width `E`.
    joint: Vec<T>,
    /// Projected feature bias, width `F`.
    projected: Vec<T>,
}

fn embed<T: Scalar>(params: &DenoiserParams<T>, t: usize, scale: usize) -> Embedding<T> {
    let cfg = params.config();
    let (e, f) = (cfg.embed_dim, cfg.features);
    let table = params.tensor("scale_embedding");
    let row = &table[scale * e..(scale + 1) * e];
    let joint: Vec<T> =
        timestep_embedding(t, cfg.timesteps, e).into_iter().zip(row).map(|(a, &b)| T::c(a) + b).collect();
    let w = params.tensor("embed.weight");
    let b = params.tensor("embed.bias");
    let projected =
        (0..f).map(|o| b[o] + w[o * e..(o + 1) * e].iter().zip(&joint).map(|(&a, &x)| a * x).sum::<T>()).collect();
    Embedding { joint, projected }
}

fn stack_input<T: Scalar>(params: &DenoiserParams<T>, inp: &DenoiserInput<'_, T>) -> Vec<T> {
    let mut x = inp.x_t.data().to_vec();
    match inp.parent {
        Some(p) => x.extend_from_slice(p.data()),
        None => x.resize(2 * inp.x_t.len(), T::zero()),
    }
    debug_assert_eq!(x.len(), 2 * params.config().channels * inp.x_t.height() * inp.x_t.width());
    x
}

/// Intermediate activations kept for backpropagation.
struct Trace<T> {
    input: Vec<T>,
    /// Residual stream entering each block, then the final stream.
    stream: Vec<Vec<T>>,
    /// Pre-activation of each block's first convolution.
    inner: Vec<Vec<T>>,
    emb_joint: Vec<T>,
}

fn forward<T: Scalar>(
    params: &DenoiserParams<T>,
    inp: &DenoiserInput<'_, T>,
    record: bool,
) -> (Vec<T>, Option<Trace<T>>) {
    let cfg = *params.config();
    let (h, w) = (inp.x_t.height(), inp.x_t.width());
    let n = h * w;
    let (c, f) = (cfg.channels, cfg.features);
    let pad = cfg.padding;

    let input = stack_input(params, inp);
    let emb = embed(params, inp.t, inp.scale);
    let mut stream = vec![T::zero(); f * n];
    conv3x3_forward(
        &input,
        2 * c,
        params.tensor("conv_in.weight"),
        params.tensor("conv_in.bias"),
        f,
        h,
        w,
        pad,
        &mut stream,
    );
    for (o, plane) in stream.chunks_mut(n).enumerate() {
        let b = emb.projected[o];
        plane.iter_mut().for_each(|v| *v += b);
    }

    let mut streams = Vec::new();
    let mut inners = Vec::new();
    let mut act = vec![T::zero(); f * n];
    let mut inner = vec![T::zero(); f * n];
    let mut resid = vec![T::zero(); f * n];
    for b in 0..cfg.blocks {
        for (a, &s) in act.iter_mut().zip(&stream) {
            *a = silu(s);
        }
        conv3x3_forward(
            &act,
            f,
            params.tensor(&format!("block{b}.conv1.weight")),
            params.tensor(&format!("block{b}.conv1.bias")),
            f,
            h,
            w,
            pad,
            &mut inner,
        );
        for (a, &u) in act.iter_mut().zip(&inner) {
            *a = silu(u);
        }
        conv3x3_forward(
            &act,
            f,
            params.tensor(&format!("block{b}.conv2.weight")),
            params.tensor(&format!("block{b}.conv2.bias")),
            f,
            h,
            w,
            pad,
            &mut resid,
        );
        if record {
            streams.push(stream.clone());
            inners.push(inner.clone());
        }
        for (s, &r) in stream.iter_mut().zip(&resid) {
            *s += r;
        }
    }
    for (a, &s) in act.iter_mut().zip(&stream) {
        *a = silu(s);
    }
    let mut out = vec![T::zero(); c * n];
    conv3x3_forward(&act, f, params.tensor("conv_out.weight"), params.tensor("conv_out.bias"), c, h, w, pad, &mut out);
    let trace = record.then(|| {
        streams.push(stream);
        Trace { input, stream: streams, inner: inners, emb_joint: emb.joint }
    });
    (out, trace)
}

/// Predicted noise, shaped like `x_t`.
pub fn predict_noise<T: Scalar>(inp: &DenoiserInput<'_, T>, params: &DenoiserParams<T>) -> Result<Image<T>> {
    check_input(params, inp)?;
    let (out, _) = forward(params, inp, false);
    Image::from_vec(inp.x_t.height(), inp.x_t.width(), inp.x_t.channels(), out)
}

/// Squared error summed over one example, scaled by `weight`, with the
/// matching gradient accumulated into `grad`.
fn example_loss_grad<T: Scalar>(params: &DenoiserParams<T>, ex: &TrainingExample<T>, weight: T, grad: &mut [T]) -> T {
    let cfg = *params.config();
    let (h, w) = (ex.x_t.height(), ex.x_t.width());
    let n = h * w;
    let (c, f) = (cfg.channels, cfg.features);
    let pad = cfg.padding;
    let layout = params.layout();

    let (out, trace) = forward(params, &ex.input(), true);
    let trace = trace.expect("recorded forward");

    let mut loss = T::zero();
    let mut d_out = vec![T::zero(); c * n];
    for ((d, &o), &t) in d_out.iter_mut().zip(&out).zip(ex.target.data()) {
        let diff = o - t;
        loss += diff * diff;
        *d = T::c(2.0) * weight * diff;
    }
    loss *= weight;

    let split = |wname: &str, bname: &str| (layout.range(wname), layout.range(bname));

    // output convolution
    let final_stream = &trace.stream[cfg.blocks];
    let act: Vec<T> = final_stream.iter().map(|&s| silu(s)).collect();
    let mut d_act = vec![T::zero(); f * n];
    {
        let (wr, br) = split("conv_out.weight", "conv_out.bias");
        let (dw, db) = two_ranges(grad, wr, br);
        conv3x3_backward(&act, f, params.tensor("conv_out.weight"), c, h, w, pad, &d_out, dw, db, Some(&mut d_act));
    }
    let mut d_stream: Vec<T> = d_act.iter().zip(final_stream).map(|(&g, &s)| g * silu_grad(s)).collect();

    // residual blocks, last to first
    let mut d_inner_act = vec![T::zero(); f * n];
    for b in (0..cfg.blocks).rev() {
        let s_in = &trace.stream[b];
        let u = &trace.inner[b];
        let v: Vec<T> = u.iter().map(|&x| silu(x)).collect();
        d_inner_act.iter_mut().for_each(|x| *x = T::zero());
        let w2 = format!("block{b}.conv2.weight");
        let (wr, br) = split(&w2, &format!("block{b}.conv2.bias"));
        {
            let (dw, db) = two_ranges(grad, wr, br);
            conv3x3_backward(&v, f, params.tensor(&w2), f, h, w, pad, &d_stream, dw, db, Some(&mut d_inner_act));
        }
        let d_u: Vec<T> = d_inner_act.iter().zip(u).map(|(&g, &x)| g * silu_grad(x)).collect();
        let a: Vec<T> = s_in.iter().map(|&x| silu(x)).collect();
        let mut d_a = vec![T::zero(); f * n];
        let w1 = format!("block{b}.conv1.weight");
        let (wr, br) = split(&w1, &format!("block{b}.conv1.bias"));
        {
            let (dw, db) = two_ranges(grad, wr, br);
            conv3x3_backward(&a, f, params.tensor(&w1), f, h, w, pad, &d_u, dw, db, Some(&mut d_a));
        }
        for ((ds, &g), &x) in d_stream.iter_mut().zip(&d_a).zip(s_in) {
            *ds += g * silu_grad(x);
        }
    }

    // embedding bias on the first feature map
    let e = cfg.embed_dim;
    let d_proj: Vec<T> = d_stream.chunks(n).map(|p| p.iter().copied().sum::<T>()).collect();
    {
        let ew = layout.range("embed.weight");
        let eb = layout.range("embed.bias");
        let st = layout.range("scale_embedding");
        let w_e = params.tensor("embed.weight");
        for o in 0..f {
            grad[eb.start + o] += d_proj[o];
            for k in 0..e {
                grad[ew.start + o * e + k] += d_proj[o] * trace.emb_joint[k];
            }
        }
        let row = st.start + ex.scale * e;
        for k in 0..e {
            let mut acc = T::zero();
            for o in 0..f {
                acc += w_e[o * e + k] * d_proj[o];
            }
            grad[row + k] += acc;
        }
    }

    // input convolution; the input itself needs no gradient
    let (wr, br) = split("conv_in.weight", "conv_in.bias");
    let (dw, db) = two_ranges(grad, wr, br);
    conv3x3_backward(&trace.input, 2 * c, params.tensor("conv_in.weight"), f, h, w, pad, &d_stream, dw, db, None);

    loss
}

/// Disjoint mutable views of two non-overlapping ranges.
fn two_ranges<T>(buf: &mut [T], a: std::ops::Range<usize>, b: std::ops::Range<usize>) -> (&mut [T], &mut [T]) {
    assert!(a.end <= b.start, "weight must precede bias in the layout");
    let (lo, hi) = buf.split_at_mut(b.start);
    (&mut lo[a], &mut hi[..b.end - b.start])
}

/// Mean squared error over batch, channels and pixels, and its exact gradient.
///
/// Per-example gradients are computed in parallel and summed in batch order,
/// so results do not depend on the thread count.
pub fn loss_and_grad<T: Scalar>(batch: &[TrainingExample<T>], params: &DenoiserParams<T>) -> Result<(T, Vec<T>)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty training batch"));
    }
    for ex in batch {
        check_input(params, &ex.input())?;
        ex.x_t.ensure_same_shape(&ex.target)?;
    }
    let bsz = T::from_usize(batch.len()).unwrap();
    let parts: Vec<(T, Vec<T>)> = batch
        .par_iter()
        .map(|ex| {
            let mut g = vec![T::zero(); params.len()];
            let weight = T::one() / (bsz * T::from_usize(ex.x_t.len()).unwrap());
            let l = example_loss_grad(params, ex, weight, &mut g);
            (l, g)
        })
        .collect();
    let mut grad = vec![T::zero(); params.len()];
    let mut loss = T::zero();
    for (l, g) in parts {
        loss += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    Ok((loss, grad))
}
