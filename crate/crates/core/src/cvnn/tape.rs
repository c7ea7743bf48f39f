//! Recorded forward graph and its reverse pass.
//!
//! Gradients follow the split-real convention: for a real loss `L` and a
//! complex value `z`, the stored gradient is `dL/dRe z + i dL/dIm z`. For a
//! complex-linear map `y = A x` this gives `g_x = A^H g_y`.

use num_complex::Complex;
use rayon::prelude::*;

use super::batch::ComplexBatch;
use super::layers::{self, ConvGeom};
use super::params::{Gradients, ParamId, ParamStore};
use crate::complex::{ComplexImage, Real};
use crate::error::{Error, Result};
use crate::kspace::{data_consistency, fft2c, ifft2c, SamplingMask};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvIds {
    pub weight: ParamId,
    pub bias: ParamId,
    pub geom: ConvGeom,
}

enum Op<T> {
    Input,
    Conv { x: Var, ids: ConvIds },
    Prelu { x: Var, slopes: ParamId },
    Scale { x: Var, scales: Vec<T> },
    Add(Var, Var),
    Concat(Var, Var),
    Upsample(Var),
    Dc { x: Var, masks: Vec<SamplingMask> },
}

struct Node<T> {
    op: Op<T>,
    value: ComplexBatch<T>,
}

/// Activation record for one forward pass. Tied to the parameter version it
/// was recorded against.
pub struct Tape<T = f32> {
    nodes: Vec<Node<T>>,
    version: u64,
}

pub struct Backward<T> {
    pub params: Gradients<T>,
    nodes: Vec<Option<ComplexBatch<T>>>,
}

impl<T: Real> Backward<T> {
    /// Gradient reaching `var`, if any path led there.
    pub fn grad(&self, var: Var) -> Option<&ComplexBatch<T>> {
        self.nodes.get(var.0).and_then(Option::as_ref)
    }
}

fn slopes_of<T: Real>(params: &ParamStore<T>, id: ParamId) -> Vec<T> {
    params.values(id).iter().map(|z| z.re).collect()
}

impl<T: Real> Tape<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        Self {
            nodes: Vec::new(),
            version: params.version(),
        }
    }

    fn push(&mut self, op: Op<T>, value: ComplexBatch<T>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &ComplexBatch<T> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Sign pattern (`> 0`) of every real component entering a PReLU. Two
    /// forward passes with equal patterns lie in the same linear region.
    pub fn activation_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Prelu { x, .. } => Some(self.value(x)),
                _ => None,
            })
            .flat_map(|v| v.data().iter().flat_map(|z| [z.re > T::zero(), z.im > T::zero()]))
            .collect()
    }

    pub fn input(&mut self, x: ComplexBatch<T>) -> Var {
        self.push(Op::Input, x)
    }

    pub(crate) fn conv(&mut self, params: &ParamStore<T>, x: Var, ids: ConvIds) -> Result<Var> {
        let y = layers::conv_forward(
            self.value(x),
            params.values(ids.weight),
            Some(params.values(ids.bias)),
            ids.geom,
        )?;
        Ok(self.push(Op::Conv { x, ids }, y))
    }

    /// Convolution with a `[out, in, k, k]` kernel and an `[out]` bias from
    /// `params`, zero padding `k / 2`.
    pub fn conv2d(&mut self, params: &ParamStore<T>, x: Var, weight: ParamId, bias: ParamId, stride: usize) -> Result<Var> {
        let shape = &params.get(weight).shape;
        let [out_ch, in_ch, kernel, kw] = shape[..] else {
            return Err(Error::shape("[out, in, k, k] kernel", format!("{shape:?}")));
        };
        if kernel != kw || stride == 0 {
            return Err(Error::InvalidArgument(format!("square kernel and stride >= 1 required, got {shape:?} stride {stride}")));
        }
        if params.get(bias).shape[..] != [out_ch] {
            return Err(Error::shape(format!("[{out_ch}] bias"), format!("{:?}", params.get(bias).shape)));
        }
        let geom = ConvGeom { in_ch, out_ch, kernel, stride };
        self.conv(params, x, ConvIds { weight, bias, geom })
    }

    pub fn prelu(&mut self, params: &ParamStore<T>, x: Var, slopes: ParamId) -> Result<Var> {
        let y = layers::prelu_forward(self.value(x), &slopes_of(params, slopes))?;
        Ok(self.push(Op::Prelu { x, slopes }, y))
    }

    /// Elementwise real multipliers, as produced by dropout.
    pub fn scale(&mut self, x: Var, scales: Vec<T>) -> Result<Var> {
        if scales.len() != self.value(x).len() {
            return Err(Error::shape(self.value(x).len(), scales.len()));
        }
        let y = layers::apply_scales(self.value(x), &scales);
        Ok(self.push(Op::Scale { x, scales }, y))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.value(a).same_shape(self.value(b))?;
        let mut y = self.value(a).clone();
        y.add_assign(self.value(b));
        Ok(self.push(Op::Add(a, b), y))
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = layers::concat_channels(self.value(a), self.value(b))?;
        Ok(self.push(Op::Concat(a, b), y))
    }

    pub fn upsample2(&mut self, x: Var) -> Var {
        let y = layers::upsample2(self.value(x));
        self.push(Op::Upsample(x), y)
    }

    /// Image-domain data consistency: every single-channel sample is moved to
    /// k-space, its kept columns are replaced by `acquired[n]` (k-space), and
    /// it is moved back.
    pub fn data_consistency(&mut self, x: Var, acquired: &[ComplexImage<T>], masks: &[SamplingMask]) -> Result<Var> {
        let xv = self.value(x);
        let [n, c, h, w] = xv.shape();
        if c != 1 {
            return Err(Error::shape("1 channel", c));
        }
        if acquired.len() != n || masks.len() != n {
            return Err(Error::shape(format!("{n} acquired samples and masks"), format!("{} and {}", acquired.len(), masks.len())));
        }
        let outs: Vec<Result<ComplexImage<T>>> = (0..n)
            .into_par_iter()
            .map(|b| {
                let k = fft2c(&xv.image(b, 0));
                Ok(ifft2c(&data_consistency(&k, &acquired[b], &masks[b])?))
            })
            .collect();
        let mut data = Vec::with_capacity(n * h * w);
        for o in outs {
            data.extend(o?.into_data());
        }
        let y = ComplexBatch::from_parts([n, 1, h, w], data);
        Ok(self.push(Op::Dc { x, masks: masks.to_vec() }, y))
    }

    /// Reverse pass from `out` seeded with `grad` (same shape as `out`).
    pub fn backward(&self, out: Var, grad: ComplexBatch<T>, params: &ParamStore<T>) -> Result<Backward<T>> {
        if params.version() != self.version {
            return Err(Error::StaleActivations {
                recorded: self.version,
                current: params.version(),
            });
        }
        if out.0 >= self.nodes.len() {
            return Err(Error::MissingActivations(format!("variable {} not on tape", out.0)));
        }
        self.value(out).same_shape(&grad)?;

        let mut pg = Gradients::zeros_like(params);
        let mut g: Vec<Option<ComplexBatch<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        g[out.0] = Some(grad);

        fn acc<T: Real>(slot: &mut Option<ComplexBatch<T>>, v: ComplexBatch<T>) {
            match slot {
                Some(s) => s.add_assign(&v),
                None => *slot = Some(v),
            }
        }

        for i in (0..=out.0).rev() {
            let Some(gy) = g[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Input => {
                    g[i] = Some(gy);
                    continue;
                }
                Op::Conv { x, ids } => {
                    let r = layers::conv_backward(self.value(*x), params.values(ids.weight), &gy, ids.geom);
                    for (a, b) in pg.get_mut(ids.weight).iter_mut().zip(&r.weight) {
                        *a = *a + *b;
                    }
                    for (a, b) in pg.get_mut(ids.bias).iter_mut().zip(&r.bias) {
                        *a = *a + *b;
                    }
                    acc(&mut g[x.0], r.input);
                }
                Op::Prelu { x, slopes } => {
                    let (gx, gs) = layers::prelu_backward(self.value(*x), &slopes_of(params, *slopes), &gy);
                    for (a, b) in pg.get_mut(*slopes).iter_mut().zip(gs) {
                        a.re = a.re + b;
                    }
                    acc(&mut g[x.0], gx);
                }
                Op::Scale { x, scales } => acc(&mut g[x.0], layers::apply_scales(&gy, scales)),
                Op::Add(a, b) => {
                    acc(&mut g[b.0], gy.clone());
                    acc(&mut g[a.0], gy);
                }
                Op::Concat(a, b) => {
                    let (ga, gb) = layers::split_channels(&gy, self.value(*a).channels());
                    acc(&mut g[b.0], gb);
                    acc(&mut g[a.0], ga);
                }
                Op::Upsample(x) => acc(&mut g[x.0], layers::upsample2_backward(&gy)),
                Op::Dc { x, masks } => {
                    // y = F^H (P_drop F x + P_keep k) so g_x = F^H P_drop F g_y
                    let [n, _, h, w] = gy.shape();
                    let parts: Vec<Vec<Complex<T>>> = (0..n)
                        .into_par_iter()
                        .map(|b| {
                            let k = fft2c(&gy.image(b, 0));
                            let zero = Complex::new(T::zero(), T::zero());
                            let dropped = ComplexImage::from_fn(h, w, |r, c| {
                                if masks[b].keeps(c) {
                                    zero
                                } else {
                                    k.get(r, c)
                                }
                            });
                            ifft2c(&dropped).into_data()
                        })
                        .collect();
                    acc(&mut g[x.0], ComplexBatch::from_parts([n, 1, h, w], parts.concat()));
                }
            }
        }
        Ok(Backward { params: pg, nodes: g })
    }
}
