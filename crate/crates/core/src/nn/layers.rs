//! Layer primitives over `[batch, channel, row, col]` tensors.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::scalar::matmul;
use super::{Mode, Scalar, Tensor};
use crate::error::{Error, Result};

/// Samples accumulated per weight-gradient partial. Fixed so the reduction
/// order does not depend on the thread count.
const GRAD_GROUP: usize = 8;

#[cfg(feature = "parallel")]
fn map_groups<T, R, F>(buf: Option<&mut [T]>, group_len: usize, n_groups: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(usize, Option<&mut [T]>) -> R + Sync + Send,
{
    use rayon::prelude::*;
    match buf {
        Some(b) => b
            .par_chunks_mut(group_len)
            .enumerate()
            .map(|(g, chunk)| f(g, Some(chunk)))
            .collect(),
        None => (0..n_groups).into_par_iter().map(|g| f(g, None)).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn map_groups<T, R, F>(buf: Option<&mut [T]>, group_len: usize, n_groups: usize, f: F) -> Vec<R>
where
    F: Fn(usize, Option<&mut [T]>) -> R,
{
    match buf {
        Some(b) => b
            .chunks_mut(group_len)
            .enumerate()
            .map(|(g, chunk)| f(g, Some(chunk)))
            .collect(),
        None => (0..n_groups).map(|g| f(g, None)).collect(),
    }
}

fn dims4(t: &Tensor<impl Scalar>, what: &str) -> Result<[usize; 4]> {
    <[usize; 4]>::try_from(t.shape())
        .map_err(|_| Error::Shape(format!("{what} expects a 4-d tensor, got {:?}", t.shape())))
}

/// `floor((n + 2p − k)/s) + 1`, or an error if the window does not fit.
pub fn output_len(n: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 || kernel == 0 || n + 2 * padding < kernel {
        return Err(Error::Shape(format!(
            "window {kernel} (stride {stride}, padding {padding}) does not fit length {n}"
        )));
    }
    Ok((n + 2 * padding - kernel) / stride + 1)
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    p: usize,
    ho: usize,
    wo: usize,
}

fn im2col<T: Scalar>(x: &[T], g: &Geometry, col: &mut [T]) {
    let plane = g.ho * g.wo;
    for ci in 0..g.c {
        let src = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ci * g.k + ki) * g.k + kj;
                let dst = &mut col[row * plane..(row + 1) * plane];
                for oy in 0..g.ho {
                    let out = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    let iy = (oy * g.s + ki) as isize - g.p as isize;
                    if iy < 0 || iy >= g.h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let line = &src[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, o) in out.iter_mut().enumerate() {
                        let ix = (ox * g.s + kj) as isize - g.p as isize;
                        *o = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            line[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(col: &[T], g: &Geometry, x: &mut [T]) {
    x.fill(T::zero());
    let plane = g.ho * g.wo;
    for ci in 0..g.c {
        let dst = &mut x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ci * g.k + ki) * g.k + kj;
                let src = &col[row * plane..(row + 1) * plane];
                for oy in 0..g.ho {
                    let iy = (oy * g.s + ki) as isize - g.p as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let line = &mut dst[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.s + kj) as isize - g.p as isize;
                        if ix >= 0 && ix < g.w as isize {
                            line[ix as usize] = line[ix as usize] + src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Square-kernel 2-d convolution (cross-correlation).
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    /// `[out, in, k, k]`
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub stride: usize,
    pub padding: usize,
}

pub struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dweight: Tensor<T>,
    pub dbias: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    /// He-normal weights, zero bias.
    pub fn new<R: Rng>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let fan_in = (in_ch * kernel * kernel) as f64;
        let std = (2.0 / fan_in).sqrt();
        let weight = Tensor::from_fn(&[out_ch, in_ch, kernel, kernel], |_| {
            let z: f64 = StandardNormal.sample(rng);
            T::lit(z * std)
        });
        Self {
            weight,
            bias: bias.then(|| Tensor::zeros(&[out_ch])),
            stride,
            padding,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    fn geometry(&self, x: &Tensor<T>) -> Result<(usize, Geometry)> {
        let [n, c, h, w] = dims4(x, "conv")?;
        if c != self.in_channels() {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {c}",
                self.in_channels()
            )));
        }
        let k = self.kernel();
        let g = Geometry {
            c,
            h,
            w,
            k,
            s: self.stride,
            p: self.padding,
            ho: output_len(h, k, self.stride, self.padding)?,
            wo: output_len(w, k, self.stride, self.padding)?,
        };
        Ok((n, g))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, g) = self.geometry(x)?;
        let out_ch = self.out_channels();
        let (plane, ckk) = (g.ho * g.wo, g.c * g.k * g.k);
        let in_len = g.c * g.h * g.w;
        let mut y = Tensor::zeros(&[n, out_ch, g.ho, g.wo]);
        let per = out_ch * plane;
        map_groups(Some(y.data_mut()), per, n, |i, out| {
            let out = out.unwrap();
            let mut col = vec![T::zero(); ckk * plane];
            im2col(&x.data()[i * in_len..(i + 1) * in_len], &g, &mut col);
            matmul(out_ch, ckk, plane, self.weight.data(), false, &col, false, out, false);
            if let Some(b) = &self.bias {
                for (o, chunk) in out.chunks_mut(plane).enumerate() {
                    let bo = b.data()[o];
                    chunk.iter_mut().for_each(|v| *v = *v + bo);
                }
            }
        });
        Ok(y)
    }

    pub fn backward(&self, x: &Tensor<T>, dy: &Tensor<T>, need_dx: bool) -> Result<ConvGrads<T>> {
        let (n, g) = self.geometry(x)?;
        let out_ch = self.out_channels();
        if dy.shape() != [n, out_ch, g.ho, g.wo] {
            return Err(Error::Shape(format!("conv upstream gradient {:?}", dy.shape())));
        }
        let (plane, ckk) = (g.ho * g.wo, g.c * g.k * g.k);
        let in_len = g.c * g.h * g.w;
        let per_out = out_ch * plane;
        let mut dx = need_dx.then(|| Tensor::zeros(x.shape()));
        let n_groups = n.div_ceil(GRAD_GROUP);
        let partials = map_groups(
            dx.as_mut().map(|t| t.data_mut()),
            GRAD_GROUP * in_len,
            n_groups,
            |grp, mut dx_chunk| {
                let mut dw = vec![T::zero(); out_ch * ckk];
                let mut db = vec![T::zero(); out_ch];
                let mut col = vec![T::zero(); ckk * plane];
                let mut dcol = vec![T::zero(); ckk * plane];
                let lo = grp * GRAD_GROUP;
                let hi = (lo + GRAD_GROUP).min(n);
                for i in lo..hi {
                    let dyi = &dy.data()[i * per_out..(i + 1) * per_out];
                    im2col(&x.data()[i * in_len..(i + 1) * in_len], &g, &mut col);
                    matmul(out_ch, plane, ckk, dyi, false, &col, true, &mut dw, true);
                    for (o, chunk) in dyi.chunks(plane).enumerate() {
                        db[o] = db[o] + chunk.iter().copied().sum::<T>();
                    }
                    if let Some(dst) = dx_chunk.as_deref_mut() {
                        matmul(ckk, out_ch, plane, self.weight.data(), true, dyi, false, &mut dcol, false);
                        let off = (i - lo) * in_len;
                        col2im(&dcol, &g, &mut dst[off..off + in_len]);
                    }
                }
                (dw, db)
            },
        );
        let mut dweight = Tensor::zeros(self.weight.shape());
        let mut dbias = vec![T::zero(); out_ch];
        for (dw, db) in partials {
            for (a, b) in dweight.data_mut().iter_mut().zip(dw) {
                *a = *a + b;
            }
            for (a, b) in dbias.iter_mut().zip(db) {
                *a = *a + b;
            }
        }
        Ok(ConvGrads {
            dx,
            dweight,
            dbias: self
                .bias
                .as_ref()
                .map(|_| Tensor::from_vec(&[out_ch], dbias).unwrap()),
        })
    }
}

/// Per-channel batch normalization over batch and spatial positions.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2d<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: f64,
    pub momentum: f64,
}

/// Statistics of one training batch, used to update the running estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (divide by count) variance.
    pub var: Vec<f64>,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub enum BnCache<T> {
    Train {
        xhat: Tensor<T>,
        inv_std: Vec<T>,
        stats: BatchStats,
    },
    Infer {
        inv_std: Vec<T>,
    },
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::from_fn(&[channels], |_| T::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::from_fn(&[channels], |_| T::one()),
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, BnCache<T>)> {
        let [n, c, h, w] = dims4(x, "batchnorm")?;
        if c != self.channels() {
            return Err(Error::Shape(format!(
                "batchnorm has {} channels, input {c}",
                self.channels()
            )));
        }
        let hw = h * w;
        let count = n * hw;
        let mut y = Tensor::zeros(x.shape());
        let (mean, var): (Vec<f64>, Vec<f64>) = match mode {
            Mode::Train => (0..c)
                .map(|ch| {
                    let (mut s, mut s2) = (0.0f64, 0.0f64);
                    for i in 0..n {
                        for &v in &x.data()[(i * c + ch) * hw..(i * c + ch + 1) * hw] {
                            let v = v.as_f64();
                            s += v;
                            s2 += v * v;
                        }
                    }
                    let m = s / count as f64;
                    (m, (s2 / count as f64 - m * m).max(0.0))
                })
                .unzip(),
            Mode::Infer => (
                self.running_mean.data().iter().map(|v| v.as_f64()).collect(),
                self.running_var.data().iter().map(|v| v.as_f64()).collect(),
            ),
        };
        let inv_std: Vec<T> = var.iter().map(|v| T::lit(1.0 / (v + self.eps).sqrt())).collect();
        let mut xhat = match mode {
            Mode::Train => Some(Tensor::zeros(x.shape())),
            Mode::Infer => None,
        };
        for i in 0..n {
            for ch in 0..c {
                let range = (i * c + ch) * hw..(i * c + ch + 1) * hw;
                let (m, is) = (T::lit(mean[ch]), inv_std[ch]);
                let (gm, bt) = (self.gamma.data()[ch], self.beta.data()[ch]);
                let src = &x.data()[range.clone()];
                if let Some(xh) = xhat.as_mut() {
                    let xh = &mut xh.data_mut()[range.clone()];
                    for (d, &v) in xh.iter_mut().zip(src) {
                        *d = (v - m) * is;
                    }
                    for (o, &v) in y.data_mut()[range].iter_mut().zip(xh.iter()) {
                        *o = gm * v + bt;
                    }
                } else {
                    for (o, &v) in y.data_mut()[range].iter_mut().zip(src) {
                        *o = gm * (v - m) * is + bt;
                    }
                }
            }
        }
        let cache = match xhat {
            Some(xhat) => BnCache::Train {
                xhat,
                inv_std,
                stats: BatchStats { mean, var, count },
            },
            None => BnCache::Infer { inv_std },
        };
        Ok((y, cache))
    }

    /// Returns `(dx, dgamma, dbeta)`.
    pub fn backward(&self, cache: &BnCache<T>, dy: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
        let [n, c, h, w] = dims4(dy, "batchnorm backward")?;
        let hw = h * w;
        let mut dx = Tensor::zeros(dy.shape());
        let mut dgamma = Tensor::zeros(&[c]);
        let mut dbeta = Tensor::zeros(&[c]);
        match cache {
            BnCache::Train { xhat, inv_std, .. } => {
                if xhat.shape() != dy.shape() {
                    return Err(Error::Shape("batchnorm cache/gradient mismatch".into()));
                }
                let m = T::lit((n * hw) as f64);
                for ch in 0..c {
                    let (mut sdy, mut sdyx) = (0.0f64, 0.0f64);
                    for i in 0..n {
                        let r = (i * c + ch) * hw..(i * c + ch + 1) * hw;
                        for (&g, &xh) in dy.data()[r.clone()].iter().zip(&xhat.data()[r]) {
                            sdy += g.as_f64();
                            sdyx += (g * xh).as_f64();
                        }
                    }
                    dgamma.data_mut()[ch] = T::lit(sdyx);
                    dbeta.data_mut()[ch] = T::lit(sdy);
                    let gm = self.gamma.data()[ch];
                    let scale = gm * inv_std[ch] / m;
                    let (sdy, sdyx) = (T::lit(sdy), T::lit(sdyx));
                    for i in 0..n {
                        let r = (i * c + ch) * hw..(i * c + ch + 1) * hw;
                        let xh = &xhat.data()[r.clone()];
                        let g = &dy.data()[r.clone()];
                        for ((d, &gv), &xv) in dx.data_mut()[r].iter_mut().zip(g).zip(xh) {
                            *d = scale * (m * gv - sdy - xv * sdyx);
                        }
                    }
                }
            }
            BnCache::Infer { inv_std } => {
                // running statistics are constants here; dgamma stays zero
                // because xhat is not cached
                for ch in 0..c {
                    let scale = self.gamma.data()[ch] * inv_std[ch];
                    let mut sdy = T::zero();
                    for i in 0..n {
                        let r = (i * c + ch) * hw..(i * c + ch + 1) * hw;
                        for (d, &g) in dx.data_mut()[r.clone()].iter_mut().zip(&dy.data()[r]) {
                            *d = g * scale;
                            sdy = sdy + g;
                        }
                    }
                    dbeta.data_mut()[ch] = sdy;
                }
            }
        }
        Ok((dx, dgamma, dbeta))
    }

    /// Exponential moving average update; variance is bias-corrected.
    pub fn update_running(&mut self, stats: &BatchStats) {
        let mom = self.momentum;
        let correction = if stats.count > 1 {
            stats.count as f64 / (stats.count as f64 - 1.0)
        } else {
            1.0
        };
        for ch in 0..self.channels() {
            let rm = self.running_mean.data()[ch].as_f64();
            let rv = self.running_var.data()[ch].as_f64();
            self.running_mean.data_mut()[ch] = T::lit((1.0 - mom) * rm + mom * stats.mean[ch]);
            self.running_var.data_mut()[ch] =
                T::lit((1.0 - mom) * rv + mom * stats.var[ch] * correction);
        }
    }
}

pub fn relu_inplace<T: Scalar>(x: &mut Tensor<T>) {
    x.data_mut().iter_mut().for_each(|v| {
        if !(*v > T::zero()) {
            *v = T::zero()
        }
    });
}

/// Zeroes `dy` wherever the ReLU output `y` was not positive.
pub fn relu_backward<T: Scalar>(y: &Tensor<T>, dy: &mut Tensor<T>) {
    for (g, &v) in dy.data_mut().iter_mut().zip(y.data()) {
        if !(v > T::zero()) {
            *g = T::zero();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool2d {
    pub window: usize,
    pub stride: usize,
    pub padding: usize,
}

impl MaxPool2d {
    /// Returns the pooled tensor and, per output, the flat input index of the
    /// maximum.
    pub fn forward<T: Scalar>(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
        let [n, c, h, w] = dims4(x, "maxpool")?;
        let ho = output_len(h, self.window, self.stride, self.padding)?;
        let wo = output_len(w, self.window, self.stride, self.padding)?;
        let mut y = Tensor::zeros(&[n, c, ho, wo]);
        let mut arg = vec![0u32; n * c * ho * wo];
        let xd = x.data();
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = T::neg_infinity();
                    let mut best_i = usize::MAX;
                    for ky in 0..self.window {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..self.window {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let idx = base + iy as usize * w + ix as usize;
                            if best_i == usize::MAX || xd[idx] > best {
                                best = xd[idx];
                                best_i = idx;
                            }
                        }
                    }
                    let o = (plane * ho + oy) * wo + ox;
                    y.data_mut()[o] = best;
                    arg[o] = best_i as u32;
                }
            }
        }
        Ok((y, arg))
    }

    pub fn backward<T: Scalar>(&self, input_shape: &[usize], argmax: &[u32], dy: &Tensor<T>) -> Tensor<T> {
        let mut dx = Tensor::zeros(input_shape);
        for (&i, &g) in argmax.iter().zip(dy.data()) {
            let d = &mut dx.data_mut()[i as usize];
            *d = *d + g;
        }
        dx
    }
}

/// Fully connected layer, `y = x·Wᵀ + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    /// `[out, in]`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    /// Normal weights scaled by `1/sqrt(fan_in)`, zero bias.
    pub fn new<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let std = (1.0 / inputs as f64).sqrt();
        Self {
            weight: Tensor::from_fn(&[outputs, inputs], |_| {
                let z: f64 = StandardNormal.sample(rng);
                T::lit(z * std)
            }),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let n = x.shape()[0];
        if x.len() != n * self.inputs() {
            return Err(Error::Shape(format!(
                "linear expects {} features, got {:?}",
                self.inputs(),
                x.shape()
            )));
        }
        let out = self.outputs();
        let mut y = Tensor::zeros(&[n, out]);
        matmul(n, self.inputs(), out, x.data(), false, self.weight.data(), true, y.data_mut(), false);
        for row in y.data_mut().chunks_mut(out) {
            for (v, &b) in row.iter_mut().zip(self.bias.data()) {
                *v = *v + b;
            }
        }
        Ok(y)
    }

    /// Returns `(dx, dweight, dbias)`; `dx` has `x`'s flattened shape `[n, in]`.
    pub fn backward(&self, x: &Tensor<T>, dy: &Tensor<T>) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
        let (n, inp, out) = (dy.shape()[0], self.inputs(), self.outputs());
        let mut dw = Tensor::zeros(self.weight.shape());
        matmul(out, n, inp, dy.data(), true, x.data(), false, dw.data_mut(), false);
        let mut db = Tensor::zeros(&[out]);
        for row in dy.data().chunks(out) {
            for (d, &g) in db.data_mut().iter_mut().zip(row) {
                *d = *d + g;
            }
        }
        let mut dx = Tensor::zeros(&[n, inp]);
        matmul(n, out, inp, dy.data(), false, self.weight.data(), false, dx.data_mut(), false);
        (dx, dw, db)
    }
}

/// Row-wise softmax of `[n, k]` logits.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let k = *logits.shape().last().unwrap_or(&1);
    let mut p = logits.clone();
    for row in p.data_mut().chunks_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total = total + *v;
        }
        row.iter_mut().for_each(|v| *v = *v / total);
    }
    p
}

/// Mean cross-entropy over the batch and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, targets: &[usize]) -> Result<(T, Tensor<T>)> {
    let [n, k] = <[usize; 2]>::try_from(logits.shape())
        .map_err(|_| Error::Shape(format!("logits must be [n, k], got {:?}", logits.shape())))?;
    if targets.len() != n || targets.iter().any(|&t| t >= k) {
        return Err(Error::Shape(format!("{} targets for {n}×{k} logits", targets.len())));
    }
    let mut grad = softmax(logits);
    let mut loss = 0.0f64;
    let inv_n = T::lit(1.0 / n as f64);
    for ((row, logit_row), &t) in grad.data_mut().chunks_mut(k).zip(logits.data().chunks(k)).zip(targets) {
        let max = logit_row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let lse = logit_row.iter().map(|v| (v.as_f64() - max).exp()).sum::<f64>().ln() + max;
        loss += lse - logit_row[t].as_f64();
        row[t] = row[t] - T::one();
        row.iter_mut().for_each(|v| *v = *v * inv_n);
    }
    Ok((T::lit(loss / n as f64), grad))
}
