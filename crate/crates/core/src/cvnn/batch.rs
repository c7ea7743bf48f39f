use num_complex::Complex;

use crate::complex::{is_finite, ComplexImage, Real};
use crate::error::{Error, Result};

/// N x C x H x W complex tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexBatch<T = f32> {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> ComplexBatch<T> {
    pub fn new(shape: [usize; 4], data: Vec<Complex<T>>) -> Result<Self> {
        let [n, c, h, w] = shape;
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!("batch dims must be positive, got {shape:?}")));
        }
        if data.len() != n * c * h * w {
            return Err(Error::shape(format!("{} samples for {shape:?}", n * c * h * w), data.len()));
        }
        if let Some(index) = data.iter().position(|z| !is_finite(z)) {
            return Err(Error::NonFinite {
                what: "complex batch",
                index,
            });
        }
        Ok(Self { n, c, h, w, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        let [n, c, h, w] = shape;
        Self {
            n,
            c,
            h,
            w,
            data: vec![Complex::default(); n * c * h * w],
        }
    }

    pub(crate) fn from_parts(shape: [usize; 4], data: Vec<Complex<T>>) -> Self {
        let [n, c, h, w] = shape;
        debug_assert_eq!(data.len(), n * c * h * w);
        Self { n, c, h, w, data }
    }

    /// Stacks images as the channels of a single-sample batch.
    pub fn from_channels(channels: &[&ComplexImage<T>]) -> Result<Self> {
        let first = channels
            .first()
            .ok_or(Error::Empty("channel list"))?;
        let (h, w) = first.shape();
        let mut data = Vec::with_capacity(channels.len() * h * w);
        for img in channels {
            first.same_shape(img)?;
            data.extend_from_slice(img.data());
        }
        Ok(Self::from_parts([1, channels.len(), h, w], data))
    }

    /// Concatenates batches along N.
    pub fn stack(items: &[Self]) -> Result<Self> {
        let first = items.first().ok_or(Error::Empty("batch list"))?;
        let [_, c, h, w] = first.shape();
        let mut data = Vec::new();
        let mut n = 0;
        for b in items {
            if b.shape()[1..] != [c, h, w] {
                return Err(Error::shape(format!("[_, {c}, {h}, {w}]"), format!("{:?}", b.shape())));
            }
            n += b.n;
            data.extend_from_slice(&b.data);
        }
        Ok(Self::from_parts([n, c, h, w], data))
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn batch_size(&self) -> usize {
        self.n
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex<T>> {
        self.data
    }

    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn plane(&self, n: usize, c: usize) -> &[Complex<T>] {
        let hw = self.h * self.w;
        let start = (n * self.c + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn image(&self, n: usize, c: usize) -> ComplexImage<T> {
        ComplexImage::from_parts(self.h, self.w, self.plane(n, c).to_vec())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(is_finite)
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
    }

    pub fn scale(&self, s: T) -> Self {
        Self::from_parts(self.shape(), self.data.iter().map(|z| z * s).collect())
    }

    pub fn cast<U: Real>(&self) -> ComplexBatch<U> {
        ComplexBatch::from_parts(
            self.shape(),
            self.data
                .iter()
                .map(|z| Complex::new(U::of(z.re.f64()), U::of(z.im.f64())))
                .collect(),
        )
    }

    pub(crate) fn same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(format!("{:?}", self.shape()), format!("{:?}", other.shape())));
        }
        Ok(())
    }
}
