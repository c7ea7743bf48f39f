//! Seeded head-like phantoms with a smooth ground-truth phase.

use std::path::Path;

use num_complex::Complex32;

use crate::complex::{from_polar, wrap_phase, ComplexImage, Grid, PolarImage, Rng};
use crate::error::{Error, Result};
use crate::tensor_io::{self, Tensor, TensorError};

pub const MIN_PHANTOM_SIZE: usize = 16;

/// Magnitude in [0, 1], phase in (-pi, pi] and the brain region.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomRecord {
    pub magnitude: Grid<f32>,
    pub true_phase: Grid<f32>,
    pub brain_mask: Option<Grid<bool>>,
}

struct Ellipse {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    angle: f64,
}

impl Ellipse {
    /// Squared normalized radius; inside when < 1. Coordinates in [-1, 1].
    fn rho2(&self, y: f64, x: f64) -> f64 {
        let (s, c) = self.angle.sin_cos();
        let (dy, dx) = (y - self.cy, x - self.cx);
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.rx).powi(2) + (v / self.ry).powi(2)
    }

    fn scaled(&self, f: f64) -> Ellipse {
        Ellipse {
            ry: self.ry * f,
            rx: self.rx * f,
            ..*self
        }
    }
}

fn between(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform()
}

/// Ellipse-composite head: a bright skull ring around a brain of intermediate
/// intensity holding 3 to 5 darker or brighter inner structures. The phase is
/// a wrapped low-order polynomial plus 2 to 4 broad Gaussian bumps, defined
/// over the whole grid.
pub fn generate_phantom(seed: u64, size: usize) -> Result<PhantomRecord> {
    if size < MIN_PHANTOM_SIZE {
        return Err(Error::InvalidArgument(format!("phantom size must be >= {MIN_PHANTOM_SIZE}, got {size}")));
    }
    let mut rng = Rng::new(seed);
    let head = Ellipse {
        cy: between(&mut rng, -0.05, 0.05),
        cx: between(&mut rng, -0.05, 0.05),
        ry: between(&mut rng, 0.72, 0.9),
        rx: between(&mut rng, 0.58, 0.78),
        angle: between(&mut rng, -0.3, 0.3),
    };
    let brain = head.scaled(between(&mut rng, 0.82, 0.9));
    let brain_level = between(&mut rng, 0.45, 0.65);
    let n_inner = rng.int_inclusive(3, 5);
    let inner: Vec<(Ellipse, f64)> = (0..n_inner)
        .map(|_| {
            let r = between(&mut rng, 0.0, 0.45);
            let t = rng.uniform_phase();
            let e = Ellipse {
                cy: brain.cy + r * brain.ry * t.sin(),
                cx: brain.cx + r * brain.rx * t.cos(),
                ry: between(&mut rng, 0.06, 0.22),
                rx: between(&mut rng, 0.05, 0.2),
                angle: rng.uniform_phase(),
            };
            (e, between(&mut rng, -0.35, 0.3))
        })
        .collect();

    // phase: c0 + c1 x + c2 y + c3 x^2 + c4 xy + c5 y^2 + bumps
    let poly = [
        between(&mut rng, -0.3, 0.3),
        between(&mut rng, -0.6, 0.6),
        between(&mut rng, -0.6, 0.6),
        between(&mut rng, -0.4, 0.4),
        between(&mut rng, -0.4, 0.4),
        between(&mut rng, -0.4, 0.4),
    ];
    let n_bumps = rng.int_inclusive(2, 4);
    let bumps: Vec<[f64; 4]> = (0..n_bumps)
        .map(|_| {
            let amp = between(&mut rng, 0.3, 0.9) * if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
            [
                between(&mut rng, -0.6, 0.6),
                between(&mut rng, -0.6, 0.6),
                between(&mut rng, 0.2, 0.45),
                amp,
            ]
        })
        .collect();

    let coord = |i: usize| 2.0 * (i as f64 + 0.5) / size as f64 - 1.0;
    let mut magnitude = Vec::with_capacity(size * size);
    let mut phase = Vec::with_capacity(size * size);
    let mut mask = Vec::with_capacity(size * size);
    for r in 0..size {
        let y = coord(r);
        for c in 0..size {
            let x = coord(c);
            let in_head = head.rho2(y, x) < 1.0;
            let in_brain = brain.rho2(y, x) < 1.0;
            let mut m = if in_brain {
                brain_level
            } else if in_head {
                1.0
            } else {
                0.0
            };
            if in_brain {
                for (e, delta) in &inner {
                    if e.rho2(y, x) < 1.0 {
                        m += delta;
                    }
                }
                m = m.clamp(0.08, 1.0);
            }
            magnitude.push(m as f32);
            mask.push(in_brain);

            let mut p = poly[0] + poly[1] * x + poly[2] * y + poly[3] * x * x + poly[4] * x * y + poly[5] * y * y;
            for [by, bx, width, amp] in &bumps {
                p += amp * (-((y - by).powi(2) + (x - bx).powi(2)) / (2.0 * width * width)).exp();
            }
            phase.push(wrap_phase(p) as f32);
        }
    }
    Ok(PhantomRecord {
        magnitude: Grid::new(size, size, magnitude)?,
        true_phase: Grid::new(size, size, phase)?,
        brain_mask: Some(Grid::new(size, size, mask)?),
    })
}

impl PhantomRecord {
    pub fn shape(&self) -> (usize, usize) {
        self.magnitude.shape()
    }

    /// `magnitude * exp(i phase)`.
    pub fn complex(&self) -> ComplexImage<f32> {
        from_polar(&self.polar()).expect("phantom magnitudes are non-negative")
    }

    pub fn polar(&self) -> PolarImage<f32> {
        PolarImage::new(self.magnitude.clone(), self.true_phase.clone()).expect("phantom invariants hold")
    }

    pub fn background_fraction(&self) -> f64 {
        self.magnitude.data().iter().filter(|&&m| m == 0.0).count() as f64 / self.magnitude.len() as f64
    }

    /// Rank-3 tensor `[3, h, w]`: magnitude, phase and mask (0/1) planes,
    /// real parts only.
    pub fn to_tensor(&self) -> Tensor {
        let (h, w) = self.shape();
        let mut data = Vec::with_capacity(3 * h * w);
        data.extend(self.magnitude.data().iter().map(|&m| Complex32::new(m, 0.0)));
        data.extend(self.true_phase.data().iter().map(|&p| Complex32::new(p, 0.0)));
        match &self.brain_mask {
            Some(mask) => data.extend(mask.data().iter().map(|&b| Complex32::new(if b { 1.0 } else { 0.0 }, 0.0))),
            None => data.extend(std::iter::repeat(Complex32::new(-1.0, 0.0)).take(h * w)),
        }
        Tensor {
            dims: vec![3, h, w],
            data,
        }
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.rank() != 3 || t.dims[0] != 3 {
            return Err(Error::shape("[3, h, w] phantom tensor", format!("{:?}", t.dims)));
        }
        let (h, w) = (t.dims[1], t.dims[2]);
        let plane = |k: usize| t.data[k * h * w..(k + 1) * h * w].iter().map(|z| z.re);
        let magnitude = Grid::new(h, w, plane(0).collect())?;
        let true_phase = Grid::new(h, w, plane(1).collect())?;
        let mask_vals: Vec<f32> = plane(2).collect();
        let brain_mask = if mask_vals.iter().all(|&v| v < 0.0) {
            None
        } else {
            Some(Grid::new(h, w, mask_vals.iter().map(|&v| v > 0.5).collect())?)
        };
        let rec = Self {
            magnitude,
            true_phase,
            brain_mask,
        };
        // validates magnitude >= 0 and phase range
        PolarImage::new(rec.magnitude.clone(), rec.true_phase.clone())?;
        Ok(rec)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(tensor_io::write_raw(path, &self.to_tensor())?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let t = tensor_io::read_raw(path)?;
        if let Some(i) = t.data.iter().position(|z| !z.is_finite()) {
            return Err(TensorError::NonFinite(i).into());
        }
        Self::from_tensor(&t)
    }
}
