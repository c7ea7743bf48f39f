use crate::complex::{Grid, Real};
use crate::error::{Error, Result};

/// Boolean pixel mask.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMask(pub Grid<bool>);

impl BinaryMask {
    pub fn new(grid: Grid<bool>) -> Self {
        Self(grid)
    }

    pub fn from_points(height: usize, width: usize, points: &[(usize, usize)]) -> Self {
        let mut g = Grid::from_fn(height, width, |_, _| false);
        for &(r, c) in points {
            g.data_mut()[r * width + c] = true;
        }
        Self(g)
    }

    /// Pixels strictly above `threshold`.
    pub fn threshold<T: Real>(grid: &Grid<T>, threshold: f64) -> Self {
        Self(grid.map(|v| v.f64() > threshold))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn count(&self) -> usize {
        self.0.data().iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        *self.0.get(row, col)
    }

    pub fn grid(&self) -> &Grid<bool> {
        &self.0
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        self.0.same_shape(&other.0)
    }
}

/// `2 |a & b| / (|a| + |b|)` in percent; 100 when both are empty.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.check_shape(b)?;
    let both = a.0.data().iter().zip(b.0.data()).filter(|(x, y)| **x && **y).count();
    let total = a.count() + b.count();
    if total == 0 {
        return Ok(100.0);
    }
    Ok(200.0 * both as f64 / total as f64)
}

/// Exact symmetric Hausdorff distance in pixels (Euclidean).
pub fn hausdorff(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.check_shape(b)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("mask for Hausdorff distance"));
    }
    Ok(directed(a, b).max(directed(b, a)))
}

/// `max over a of the distance to the nearest pixel of b`.
fn directed(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let d2 = squared_distance_transform(b);
    a.0.data()
        .iter()
        .zip(&d2)
        .filter(|(on, _)| **on)
        .map(|(_, d)| *d)
        .fold(0.0, f64::max)
        .sqrt()
}

/// Squared Euclidean distance from every pixel to the nearest set pixel,
/// separable lower-envelope algorithm (exact).
fn squared_distance_transform(mask: &BinaryMask) -> Vec<f64> {
    let (h, w) = mask.shape();
    let inf = 1e20;
    let mut d: Vec<f64> = mask.0.data().iter().map(|&on| if on { 0.0 } else { inf }).collect();
    let mut line = Vec::new();
    for c in 0..w {
        line.clear();
        line.extend((0..h).map(|r| d[r * w + c]));
        let out = envelope_1d(&line);
        for r in 0..h {
            d[r * w + c] = out[r];
        }
    }
    for r in 0..h {
        let out = envelope_1d(&d[r * w..(r + 1) * w]);
        d[r * w..(r + 1) * w].copy_from_slice(&out);
    }
    d
}

fn envelope_1d(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let inter = |q: usize, p: usize| ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * q as f64 - 2.0 * p as f64);
    for q in 1..n {
        let mut s = inter(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = inter(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut out = vec![0.0; n];
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as f64 - v[k] as f64;
        *o = dq * dq + f[v[k]];
    }
    out
}
