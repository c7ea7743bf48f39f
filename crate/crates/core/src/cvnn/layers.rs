//! Complex layer kernels.
//!
//! Forward and backward passes work on whole batches and parallelize over the
//! batch axis. Per-sample weight-gradient partials are summed in sample order
//! so results do not depend on the thread count.

use num_complex::Complex;
use rayon::prelude::*;

use super::batch::ComplexBatch;
use crate::complex::{Real, Rng};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeom {
    fn pad(&self) -> usize {
        self.kernel / 2
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        let p = self.pad();
        (
            (h + 2 * p - self.kernel) / self.stride + 1,
            (w + 2 * p - self.kernel) / self.stride + 1,
        )
    }

    /// Output positions `o` in `0..out` whose input `o * stride + k - pad` is in `0..len`.
    #[inline]
    fn valid(&self, k: usize, len: usize, out: usize) -> std::ops::Range<usize> {
        let (s, p) = (self.stride as isize, self.pad() as isize);
        let off = k as isize - p;
        // o * s + off >= 0  and  o * s + off <= len - 1
        let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        let hi = (len as isize - 1 - off).div_euclid(s) + 1;
        let hi = hi.clamp(0, out as isize);
        (lo.min(hi)) as usize..hi as usize
    }

    fn check(&self, x: &ComplexBatch<impl Real>, weight_len: usize, bias_len: Option<usize>) -> Result<()> {
        if self.kernel % 2 == 0 {
            return Err(Error::InvalidArgument(format!("kernel size must be odd, got {}", self.kernel)));
        }
        if x.channels() != self.in_ch {
            return Err(Error::shape(format!("{} input channels", self.in_ch), x.channels()));
        }
        let expect = self.out_ch * self.in_ch * self.kernel * self.kernel;
        if weight_len != expect {
            return Err(Error::shape(format!("{expect} kernel weights"), weight_len));
        }
        if let Some(b) = bias_len {
            if b != self.out_ch {
                return Err(Error::shape(format!("{} biases", self.out_ch), b));
            }
        }
        Ok(())
    }
}

pub(crate) fn conv_forward<T: Real>(
    x: &ComplexBatch<T>,
    weight: &[Complex<T>],
    bias: Option<&[Complex<T>]>,
    g: ConvGeom,
) -> Result<ComplexBatch<T>> {
    g.check(x, weight.len(), bias.map(<[_]>::len))?;
    let [n, _, h, w] = x.shape();
    let (oh, ow) = g.out_size(h, w);
    let (s, p, k) = (g.stride, g.pad(), g.kernel);
    let out_len = g.out_ch * oh * ow;
    let mut out = vec![Complex::default(); n * out_len];
    out.par_chunks_mut(out_len)
        .zip(x.data().par_chunks(x.sample_len()))
        .for_each(|(out_s, x_s)| {
            for o in 0..g.out_ch {
                let out_p = &mut out_s[o * oh * ow..(o + 1) * oh * ow];
                if let Some(b) = bias {
                    out_p.fill(b[o]);
                }
                for i in 0..g.in_ch {
                    let in_p = &x_s[i * h * w..(i + 1) * h * w];
                    for ky in 0..k {
                        let rows = g.valid(ky, h, oh);
                        for kx in 0..k {
                            let cols = g.valid(kx, w, ow);
                            let wv = weight[((o * g.in_ch + i) * k + ky) * k + kx];
                            for oy in rows.clone() {
                                let iy = oy * s + ky - p;
                                let in_row = &in_p[iy * w..(iy + 1) * w];
                                let out_row = &mut out_p[oy * ow..(oy + 1) * ow];
                                if s == 1 {
                                    let ix0 = cols.start + kx - p;
                                    let src = &in_row[ix0..ix0 + cols.len()];
                                    for (dst, &v) in out_row[cols.clone()].iter_mut().zip(src) {
                                        *dst = *dst + wv * v;
                                    }
                                } else {
                                    for ox in cols.clone() {
                                        let ix = ox * s + kx - p;
                                        out_row[ox] = out_row[ox] + wv * in_row[ix];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    Ok(ComplexBatch::from_parts([n, g.out_ch, oh, ow], out))
}

pub(crate) struct ConvGrads<T> {
    pub input: ComplexBatch<T>,
    pub weight: Vec<Complex<T>>,
    pub bias: Vec<Complex<T>>,
}

/// Backward of [`conv_forward`] given the output gradient `gy`.
pub(crate) fn conv_backward<T: Real>(
    x: &ComplexBatch<T>,
    weight: &[Complex<T>],
    gy: &ComplexBatch<T>,
    g: ConvGeom,
) -> ConvGrads<T> {
    let [n, _, h, w] = x.shape();
    let (oh, ow) = (gy.height(), gy.width());
    let (s, p, k) = (g.stride, g.pad(), g.kernel);
    let wlen = weight.len();

    let partials: Vec<(Vec<Complex<T>>, Vec<Complex<T>>, Vec<Complex<T>>)> = (0..n)
        .into_par_iter()
        .map(|b| {
            let x_s = &x.data()[b * x.sample_len()..(b + 1) * x.sample_len()];
            let gy_s = &gy.data()[b * gy.sample_len()..(b + 1) * gy.sample_len()];
            let mut gx = vec![Complex::default(); x.sample_len()];
            let mut gw = vec![Complex::default(); wlen];
            let mut gb = vec![Complex::default(); g.out_ch];
            for o in 0..g.out_ch {
                let gy_p = &gy_s[o * oh * ow..(o + 1) * oh * ow];
                gb[o] = gy_p.iter().copied().sum();
                for i in 0..g.in_ch {
                    let in_p = &x_s[i * h * w..(i + 1) * h * w];
                    let gx_p = &mut gx[i * h * w..(i + 1) * h * w];
                    for ky in 0..k {
                        let rows = g.valid(ky, h, oh);
                        for kx in 0..k {
                            let cols = g.valid(kx, w, ow);
                            let widx = ((o * g.in_ch + i) * k + ky) * k + kx;
                            let wc = weight[widx].conj();
                            let mut acc = Complex::default();
                            for oy in rows.clone() {
                                let iy = oy * s + ky - p;
                                let gy_row = &gy_p[oy * ow..(oy + 1) * ow];
                                for ox in cols.clone() {
                                    let ix = iy * w + ox * s + kx - p;
                                    let gv = gy_row[ox];
                                    acc = acc + in_p[ix].conj() * gv;
                                    gx_p[ix] = gx_p[ix] + wc * gv;
                                }
                            }
                            gw[widx] = gw[widx] + acc;
                        }
                    }
                }
            }
            (gx, gw, gb)
        })
        .collect();

    let mut input = Vec::with_capacity(x.len());
    let mut gw = vec![Complex::default(); wlen];
    let mut gb = vec![Complex::default(); g.out_ch];
    for (gx_s, gw_s, gb_s) in partials {
        input.extend(gx_s);
        for (a, b) in gw.iter_mut().zip(gw_s) {
            *a = *a + b;
        }
        for (a, b) in gb.iter_mut().zip(gb_s) {
            *a = *a + b;
        }
    }
    ConvGrads {
        input: ComplexBatch::from_parts(x.shape(), input),
        weight: gw,
        bias: gb,
    }
}

#[inline]
fn prelu<T: Real>(v: T, a: T) -> T {
    if v > T::zero() {
        v
    } else {
        a * v
    }
}

fn check_slopes<T: Real>(x: &ComplexBatch<T>, slopes: usize) -> Result<()> {
    if slopes != x.channels() {
        return Err(Error::shape(format!("{} PReLU slopes", x.channels()), slopes));
    }
    Ok(())
}

pub(crate) fn prelu_forward<T: Real>(x: &ComplexBatch<T>, slopes: &[T]) -> Result<ComplexBatch<T>> {
    check_slopes(x, slopes.len())?;
    let hw = x.height() * x.width();
    let c = x.channels();
    let data = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let a = slopes[(i / hw) % c];
            Complex::new(prelu(z.re, a), prelu(z.im, a))
        })
        .collect();
    Ok(ComplexBatch::from_parts(x.shape(), data))
}

/// Returns (input gradient, slope gradient).
pub(crate) fn prelu_backward<T: Real>(x: &ComplexBatch<T>, slopes: &[T], gy: &ComplexBatch<T>) -> (ComplexBatch<T>, Vec<T>) {
    let hw = x.height() * x.width();
    let c = x.channels();
    let mut gslope = vec![0.0f64; c];
    let data = x
        .data()
        .iter()
        .zip(gy.data())
        .enumerate()
        .map(|(i, (z, gv))| {
            let ch = (i / hw) % c;
            let a = slopes[ch];
            let (dr, di) = (
                if z.re > T::zero() { T::one() } else { a },
                if z.im > T::zero() { T::one() } else { a },
            );
            if z.re <= T::zero() {
                gslope[ch] += (gv.re * z.re).f64();
            }
            if z.im <= T::zero() {
                gslope[ch] += (gv.im * z.im).f64();
            }
            Complex::new(gv.re * dr, gv.im * di)
        })
        .collect();
    (
        ComplexBatch::from_parts(x.shape(), data),
        gslope.into_iter().map(T::of).collect(),
    )
}

/// Per-sample dropout multipliers: 0 with probability `rate`, else `1 / (1 - rate)`.
pub(crate) fn dropout_scales<T: Real>(len: usize, rate: f64, rng: &mut Rng) -> Vec<T> {
    let keep = T::of(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| if rng.bernoulli(rate) { T::zero() } else { keep })
        .collect()
}

pub(crate) fn apply_scales<T: Real>(x: &ComplexBatch<T>, scales: &[T]) -> ComplexBatch<T> {
    ComplexBatch::from_parts(
        x.shape(),
        x.data().iter().zip(scales).map(|(z, &s)| z * s).collect(),
    )
}

pub(crate) fn upsample2<T: Real>(x: &ComplexBatch<T>) -> ComplexBatch<T> {
    let [n, c, h, w] = x.shape();
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for nc in 0..n * c {
        let p = &x.data()[nc * h * w..(nc + 1) * h * w];
        for oy in 0..oh {
            let row = &p[(oy / 2) * w..(oy / 2 + 1) * w];
            for ox in 0..ow {
                out.push(row[ox / 2]);
            }
        }
    }
    ComplexBatch::from_parts([n, c, oh, ow], out)
}

pub(crate) fn upsample2_backward<T: Real>(gy: &ComplexBatch<T>) -> ComplexBatch<T> {
    let [n, c, oh, ow] = gy.shape();
    let (h, w) = (oh / 2, ow / 2);
    let mut out = vec![Complex::default(); n * c * h * w];
    for nc in 0..n * c {
        let g = &gy.data()[nc * oh * ow..(nc + 1) * oh * ow];
        let o = &mut out[nc * h * w..(nc + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let i = (oy / 2) * w + ox / 2;
                o[i] = o[i] + g[oy * ow + ox];
            }
        }
    }
    ComplexBatch::from_parts([n, c, h, w], out)
}

pub(crate) fn concat_channels<T: Real>(a: &ComplexBatch<T>, b: &ComplexBatch<T>) -> Result<ComplexBatch<T>> {
    let [n, ca, h, w] = a.shape();
    let [nb, cb, hb, wb] = b.shape();
    if (n, h, w) != (nb, hb, wb) {
        return Err(Error::shape(format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    for s in 0..n {
        data.extend_from_slice(&a.data()[s * a.sample_len()..(s + 1) * a.sample_len()]);
        data.extend_from_slice(&b.data()[s * b.sample_len()..(s + 1) * b.sample_len()]);
    }
    Ok(ComplexBatch::from_parts([n, ca + cb, h, w], data))
}

pub(crate) fn split_channels<T: Real>(g: &ComplexBatch<T>, ca: usize) -> (ComplexBatch<T>, ComplexBatch<T>) {
    let [n, c, h, w] = g.shape();
    let cb = c - ca;
    let (la, lb) = (ca * h * w, cb * h * w);
    let mut a = Vec::with_capacity(n * la);
    let mut b = Vec::with_capacity(n * lb);
    for s in 0..n {
        let sample = &g.data()[s * (la + lb)..(s + 1) * (la + lb)];
        a.extend_from_slice(&sample[..la]);
        b.extend_from_slice(&sample[la..]);
    }
    (
        ComplexBatch::from_parts([n, ca, h, w], a),
        ComplexBatch::from_parts([n, cb, h, w], b),
    )
}

/// Complex convolution weights `[out, in, k, k]` with one bias per output channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvWeights<T = f32> {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub weight: Vec<Complex<T>>,
    pub bias: Vec<Complex<T>>,
}

/// Same-padded complex convolution. With `x = a + ib` and `w = u + iv` the
/// output is `(a*u - b*v) + i(a*v + b*u) + bias`.
pub fn complex_conv2d<T: Real>(x: &ComplexBatch<T>, conv: &ConvWeights<T>) -> Result<ComplexBatch<T>> {
    let g = ConvGeom {
        in_ch: conv.in_channels,
        out_ch: conv.out_channels,
        kernel: conv.kernel,
        stride: conv.stride.max(1),
    };
    conv_forward(x, &conv.weight, Some(&conv.bias), g)
}

/// PReLU on real and imaginary parts separately, one slope per channel.
pub fn complex_prelu<T: Real>(x: &ComplexBatch<T>, slopes: &[T]) -> Result<ComplexBatch<T>> {
    prelu_forward(x, slopes)
}

/// Drops whole complex samples with probability `rate` and rescales the
/// survivors by `1 / (1 - rate)`. Identity when `training` is false.
pub fn complex_dropout<T: Real>(x: &ComplexBatch<T>, rate: f64, rng: &mut Rng, training: bool) -> Result<ComplexBatch<T>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if !training || rate == 0.0 {
        return Ok(x.clone());
    }
    Ok(apply_scales(x, &dropout_scales(x.len(), rate, rng)))
}
