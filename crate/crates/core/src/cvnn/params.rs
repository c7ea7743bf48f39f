use num_complex::Complex;

use crate::complex::{is_finite, Real, Rng};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Complex parameters train both components; real ones (PReLU slopes) keep
/// the imaginary part at zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Complex,
    Real,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
    pub values: Vec<Complex<T>>,
}

impl<T> Param<T> {
    /// Trainable real components: two per complex element, one per real element.
    pub fn real_len(&self) -> usize {
        match self.kind {
            ParamKind::Complex => 2 * self.values.len(),
            ParamKind::Real => self.values.len(),
        }
    }
}

/// All trainable tensors of a model. `version` increments on every update so
/// activation records can detect that they were taken against older values.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T = f32> {
    params: Vec<Param<T>>,
    version: u64,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            version: 0,
        }
    }

    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, kind: ParamKind, values: Vec<Complex<T>>) -> ParamId {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.params.push(Param {
            name: name.into(),
            shape,
            kind,
            values,
        });
        ParamId(self.params.len() - 1)
    }

    /// Complex kernel `[out, in, k, k]`: uniform phase, Rayleigh modulus with
    /// scale `1 / sqrt(in * k * k)`.
    pub fn add_kernel(&mut self, name: &str, out_ch: usize, in_ch: usize, k: usize, rng: &mut Rng) -> ParamId {
        let fan_in = (in_ch * k * k) as f64;
        let sigma = 1.0 / fan_in.sqrt();
        let values = (0..out_ch * in_ch * k * k)
            .map(|_| {
                let u = 1.0 - rng.uniform();
                let modulus = sigma * (-2.0 * u.ln()).sqrt();
                let phase = rng.uniform_phase();
                Complex::new(T::of(modulus * phase.cos()), T::of(modulus * phase.sin()))
            })
            .collect();
        self.add(name, vec![out_ch, in_ch, k, k], ParamKind::Complex, values)
    }

    pub fn add_zeros(&mut self, name: &str, shape: Vec<usize>, kind: ParamKind) -> ParamId {
        let n = shape.iter().product();
        self.add(name, shape, kind, vec![Complex::default(); n])
    }

    pub fn add_real_filled(&mut self, name: &str, len: usize, value: f64) -> ParamId {
        self.add(name, vec![len], ParamKind::Real, vec![Complex::new(T::of(value), T::zero()); len])
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn values(&self, id: ParamId) -> &[Complex<T>] {
        &self.params[id.0].values
    }

    pub fn values_mut(&mut self, id: ParamId) -> &mut [Complex<T>] {
        self.version += 1;
        &mut self.params[id.0].values
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Param<T>] {
        self.version += 1;
        &mut self.params
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Number of trainable real components.
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Param::real_len).sum()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    kind: p.kind,
                    values: p
                        .values
                        .iter()
                        .map(|z| Complex::new(U::of(z.re.f64()), U::of(z.im.f64())))
                        .collect(),
                })
                .collect(),
            version: self.version,
        }
    }

    /// Maps a flat real-component index to (tensor, element, imaginary?).
    pub fn locate(&self, mut flat: usize) -> Option<(ParamId, usize, bool)> {
        for (i, p) in self.params.iter().enumerate() {
            let n = p.real_len();
            if flat < n {
                return Some(match p.kind {
                    ParamKind::Complex => (ParamId(i), flat / 2, flat % 2 == 1),
                    ParamKind::Real => (ParamId(i), flat, false),
                });
            }
            flat -= n;
        }
        None
    }

    pub fn component(&self, flat: usize) -> T {
        let (id, e, imag) = self.locate(flat).expect("flat index in range");
        let z = self.params[id.0].values[e];
        if imag {
            z.im
        } else {
            z.re
        }
    }

    pub fn set_component(&mut self, flat: usize, value: T) {
        let (id, e, imag) = self.locate(flat).expect("flat index in range");
        self.version += 1;
        let z = &mut self.params[id.0].values[e];
        if imag {
            z.im = value;
        } else {
            z.re = value;
        }
    }

    /// Checks that `other` has the same names, shapes and kinds.
    pub fn check_layout<U>(&self, other: &ParamStore<U>) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::shape(
                format!("{} parameter tensors", self.params.len()),
                other.params.len(),
            ));
        }
        for (a, b) in self.params.iter().zip(&other.params) {
            if a.name != b.name || a.shape != b.shape || a.kind != b.kind {
                return Err(Error::shape(
                    format!("{} {:?} {:?}", a.name, a.shape, a.kind),
                    format!("{} {:?} {:?}", b.name, b.shape, b.kind),
                ));
            }
        }
        Ok(())
    }
}

/// Gradients laid out like a [`ParamStore`]; each complex entry holds
/// `dL/dRe + i dL/dIm`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T = f32> {
    values: Vec<Vec<Complex<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(params: &ParamStore<T>) -> Self {
        Self {
            values: params
                .params
                .iter()
                .map(|p| vec![Complex::default(); p.values.len()])
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &[Complex<T>] {
        &self.values[id.0]
    }

    pub(crate) fn get_mut(&mut self, id: ParamId) -> &mut [Complex<T>] {
        &mut self.values[id.0]
    }

    pub fn tensors(&self) -> &[Vec<Complex<T>>] {
        &self.values
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            values: self
                .values
                .iter()
                .map(|v| v.iter().map(|z| z * s).collect())
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = *x + *y;
            }
        }
    }

    /// Gradient of one flat real component, indexed like [`ParamStore::locate`].
    pub fn component(&self, params: &ParamStore<T>, flat: usize) -> T {
        let (id, e, imag) = params.locate(flat).expect("flat index in range");
        let z = self.values[id.0][e];
        if imag {
            z.im
        } else {
            z.re
        }
    }

    /// First non-finite entry as (tensor index, element index).
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.values.iter().enumerate().find_map(|(i, v)| {
            v.iter().position(|z| !is_finite(z)).map(|e| (i, e))
        })
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .map(|z| z.norm_sqr().f64())
            .sum::<f64>()
            .sqrt()
    }
}
