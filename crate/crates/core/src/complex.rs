//! Complex images, polar form and the seeded noise sources.

use std::fmt;

use num_complex::Complex;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Floating-point scalar used throughout the crate.
///
/// Images default to `f32`; everything numeric is generic so that gradient
/// checks and reference computations can run in `f64`.
pub trait Real:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + rustfft::FftNum
    + std::iter::Sum
    + Default
    + fmt::Display
{
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("finite float converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[inline]
pub(crate) fn is_finite<T: Real>(z: &Complex<T>) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// Wraps an angle into the principal range (-pi, pi].
pub fn wrap_phase<T: Real>(x: T) -> T {
    let pi = T::PI();
    let tau = pi + pi;
    let mut y = x % tau;
    if y <= -pi {
        y = y + tau;
    } else if y > pi {
        y = y - tau;
    }
    y
}

/// Principal argument in (-pi, pi]; the argument of an exact zero is 0.
#[inline]
pub(crate) fn principal_arg<T: Real>(z: Complex<T>) -> T {
    if z.re == T::zero() && z.im == T::zero() {
        return T::zero();
    }
    let a = z.im.atan2(z.re);
    if a <= -T::PI() {
        T::PI()
    } else {
        a
    }
}

/// Plain row-major 2D grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T = f64> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T> Grid<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width {
            return Err(Error::shape(
                format!("{} samples ({height}x{width})", height * width),
                data.len(),
            ));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.width + col]
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Rotates the grid by 90 degrees counter-clockwise.
    pub fn rot90(&self) -> Grid<T>
    where
        T: Clone,
    {
        let (h, w) = (self.height, self.width);
        Grid::from_fn(w, h, |r, c| self.data[c * w + (w - 1 - r)].clone())
    }

    pub(crate) fn same_shape<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", other.height, other.width),
            ));
        }
        Ok(())
    }
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!(
            "image dimensions must be positive, got {height}x{width}"
        )));
    }
    Ok(())
}

/// H x W grid of complex samples, used for both image-domain and k-space data.
///
/// All samples are finite; the constructors check it.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage<T = f32> {
    height: usize,
    width: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> ComplexImage<T> {
    pub fn new(height: usize, width: usize, data: Vec<Complex<T>>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width {
            return Err(Error::shape(
                format!("{} samples ({height}x{width})", height * width),
                data.len(),
            ));
        }
        if let Some(index) = data.iter().position(|z| !is_finite(z)) {
            return Err(Error::NonFinite {
                what: "complex image",
                index,
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![Complex::new(T::zero(), T::zero()); height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let grid = Grid::from_fn(height, width, f);
        Self {
            height,
            width,
            data: grid.data,
        }
    }

    /// Builds an image from real samples with zero imaginary part.
    pub fn from_real(grid: &Grid<T>) -> Self {
        Self {
            height: grid.height,
            width: grid.width,
            data: grid.data.iter().map(|&v| Complex::new(v, T::zero())).collect(),
        }
    }

    /// Skips the finiteness scan; callers guarantee the invariant.
    pub(crate) fn from_parts(height: usize, width: usize, data: Vec<Complex<T>>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
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

    pub fn into_data(self) -> Vec<Complex<T>> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex<T> {
        self.data[row * self.width + col]
    }

    pub fn magnitude(&self) -> Grid<T> {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|z| z.norm()).collect(),
        }
    }

    pub fn phase(&self) -> Grid<T> {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&z| principal_arg(z)).collect(),
        }
    }

    pub fn scale(&self, a: Complex<T>) -> Self {
        Self::from_parts(
            self.height,
            self.width,
            self.data.iter().map(|&z| z * a).collect(),
        )
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self::from_parts(
            self.height,
            self.width,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        ))
    }

    /// Converts the sample type, e.g. `f32` to `f64`.
    pub fn cast<U: Real>(&self) -> ComplexImage<U> {
        ComplexImage {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|z| Complex::new(U::of(z.re.f64()), U::of(z.im.f64())))
                .collect(),
        }
    }

    /// Largest elementwise modulus of the difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm().f64())
            .fold(0.0, f64::max))
    }

    /// Sum of squared moduli, accumulated in f64.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr().f64()).sum()
    }

    pub(crate) fn same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", other.height, other.width),
            ));
        }
        Ok(())
    }
}

/// Magnitude/phase pair with magnitude >= 0 and phase in (-pi, pi].
#[derive(Clone, Debug, PartialEq)]
pub struct PolarImage<T = f32> {
    magnitude: Grid<T>,
    phase: Grid<T>,
}

impl<T: Real> PolarImage<T> {
    pub fn new(magnitude: Grid<T>, phase: Grid<T>) -> Result<Self> {
        magnitude.same_shape(&phase)?;
        for (index, &m) in magnitude.data.iter().enumerate() {
            if !m.is_finite() {
                return Err(Error::NonFinite {
                    what: "magnitude",
                    index,
                });
            }
            if m < T::zero() {
                return Err(Error::NegativeMagnitude {
                    index,
                    value: m.f64(),
                });
            }
        }
        for (index, &p) in phase.data.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::NonFinite {
                    what: "phase",
                    index,
                });
            }
            if p <= -T::PI() || p > T::PI() {
                return Err(Error::PhaseOutOfRange {
                    index,
                    value: p.f64(),
                });
            }
        }
        Ok(Self { magnitude, phase })
    }

    /// Wraps `phase` into the principal range before validating.
    pub fn with_wrapped_phase(magnitude: Grid<T>, phase: Grid<T>) -> Result<Self> {
        let phase = phase.map(|&p| wrap_phase(p));
        Self::new(magnitude, phase)
    }

    pub fn magnitude(&self) -> &Grid<T> {
        &self.magnitude
    }

    pub fn phase(&self) -> &Grid<T> {
        &self.phase
    }

    pub fn shape(&self) -> (usize, usize) {
        self.magnitude.shape()
    }

    pub fn into_parts(self) -> (Grid<T>, Grid<T>) {
        (self.magnitude, self.phase)
    }
}

/// Splits each sample into modulus and principal argument.
pub fn to_polar<T: Real>(z: &ComplexImage<T>) -> Result<PolarImage<T>> {
    if let Some(index) = z.data.iter().position(|s| !is_finite(s)) {
        return Err(Error::NonFinite {
            what: "complex image",
            index,
        });
    }
    Ok(PolarImage {
        magnitude: z.magnitude(),
        phase: z.phase(),
    })
}

/// Inverse of [`to_polar`]: `magnitude * exp(i * phase)` per sample.
pub fn from_polar<T: Real>(p: &PolarImage<T>) -> Result<ComplexImage<T>> {
    if let Some(index) = p.magnitude.data.iter().position(|&m| m < T::zero()) {
        return Err(Error::NegativeMagnitude {
            index,
            value: p.magnitude.data[index].f64(),
        });
    }
    let data = p
        .magnitude
        .data
        .iter()
        .zip(&p.phase.data)
        .map(|(&m, &phi)| Complex::new(m * phi.cos(), m * phi.sin()))
        .collect();
    ComplexImage::new(p.magnitude.height, p.magnitude.width, data)
}

/// Seeded ChaCha8 generator with explicit stream splitting.
///
/// `fork(i)` derives an independent child stream from `(seed, stream, i)`
/// without advancing the parent, so parallel workers get reproducible
/// streams regardless of scheduling.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fork(&self, index: u64) -> Rng {
        let stream = splitmix64(self.stream ^ splitmix64(index.wrapping_add(1)));
        Self::with_stream(self.seed, stream)
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform on (-pi, pi].
    pub fn uniform_phase(&mut self) -> f64 {
        std::f64::consts::PI - std::f64::consts::TAU * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        self.inner.random_range(lo..=hi)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Distribution of the phase of unit-modulus noise samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NoiseLaw {
    /// Phase uniform on (-pi, pi].
    #[default]
    Uniform,
    /// Standard normal phase, wrapped to (-pi, pi].
    GaussianWrapped,
}

impl NoiseLaw {
    pub fn name(self) -> &'static str {
        match self {
            NoiseLaw::Uniform => "uniform",
            NoiseLaw::GaussianWrapped => "gaussian-wrapped",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform" => Some(NoiseLaw::Uniform),
            "gaussian-wrapped" | "gaussian" => Some(NoiseLaw::GaussianWrapped),
            _ => None,
        }
    }
}

/// Unit-modulus complex noise `exp(i u)` with `u` uniform on (-pi, pi].
pub fn sample_unit_phase_noise<T: Real>(h: usize, w: usize, rng: &mut Rng) -> Result<ComplexImage<T>> {
    sample_phase_noise(h, w, NoiseLaw::Uniform, rng)
}

pub fn sample_phase_noise<T: Real>(
    h: usize,
    w: usize,
    law: NoiseLaw,
    rng: &mut Rng,
) -> Result<ComplexImage<T>> {
    check_dims(h, w)?;
    let data = (0..h * w)
        .map(|_| {
            let u = match law {
                NoiseLaw::Uniform => rng.uniform_phase(),
                NoiseLaw::GaussianWrapped => wrap_phase(rng.normal()),
            };
            Complex::new(T::of(u.cos()), T::of(u.sin()))
        })
        .collect();
    Ok(ComplexImage::from_parts(h, w, data))
}
