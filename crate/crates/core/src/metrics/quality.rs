use crate::complex::{Grid, Real};
use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 7;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn pairs<'a, T: Real>(reference: &'a Grid<T>, pred: &'a Grid<T>) -> Result<impl Iterator<Item = (f64, f64)> + 'a> {
    reference.same_shape(pred)?;
    if reference.is_empty() {
        return Err(Error::Empty("image"));
    }
    Ok(reference.data().iter().zip(pred.data()).map(|(a, b)| (a.f64(), b.f64())))
}

fn check_finite<T: Real>(g: &Grid<T>, what: &'static str) -> Result<()> {
    match g.data().iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { what, index }),
        None => Ok(()),
    }
}

pub fn mse<T: Real>(reference: &Grid<T>, pred: &Grid<T>) -> Result<f64> {
    let n = reference.len() as f64;
    Ok(pairs(reference, pred)?.map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

/// `||ref - pred|| / ||ref||`.
pub fn nrmse<T: Real>(reference: &Grid<T>, pred: &Grid<T>) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in pairs(reference, pred)? {
        num += (a - b) * (a - b);
        den += a * a;
    }
    if den == 0.0 {
        return Err(Error::InvalidArgument("nrmse needs a reference that is not all zero".into()));
    }
    Ok((num / den).sqrt())
}

/// `20 log10(max(ref) / sqrt(mse))`; `f64::INFINITY` when the images are equal.
pub fn psnr<T: Real>(reference: &Grid<T>, pred: &Grid<T>) -> Result<f64> {
    let e = mse(reference, pred)?;
    let peak = reference.data().iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0) {
        return Err(Error::InvalidArgument(format!("psnr needs max(ref) > 0, got {peak}")));
    }
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * peak.log10() - 10.0 * e.log10())
}

/// Mean SSIM in percent over all fully contained 7x7 windows, with the
/// dynamic range taken from the reference.
pub fn ssim<T: Real>(reference: &Grid<T>, pred: &Grid<T>) -> Result<f64> {
    check_finite(reference, "ssim reference")?;
    let (lo, hi) = reference
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.f64()), hi.max(v.f64())));
    if !(hi > lo) {
        return Err(Error::InvalidArgument("ssim reference is constant".into()));
    }
    ssim_with_range(reference, pred, hi - lo)
}

/// SSIM with an explicit dynamic range. Symmetric in its image arguments.
pub fn ssim_with_range<T: Real>(a: &Grid<T>, b: &Grid<T>, data_range: f64) -> Result<f64> {
    a.same_shape(b)?;
    check_finite(a, "ssim input")?;
    check_finite(b, "ssim input")?;
    let (h, w) = a.shape();
    let k = SSIM_WINDOW;
    if h < k || w < k {
        return Err(Error::InvalidArgument(format!("ssim needs at least {k}x{k}, got {h}x{w}")));
    }
    if !(data_range > 0.0) {
        return Err(Error::InvalidArgument(format!("data range must be positive, got {data_range}")));
    }
    let x: Vec<f64> = a.data().iter().map(|v| v.f64()).collect();
    let y: Vec<f64> = b.data().iter().map(|v| v.f64()).collect();
    let sx = Integral::new(h, w, |i| x[i]);
    let sy = Integral::new(h, w, |i| y[i]);
    let sxx = Integral::new(h, w, |i| x[i] * x[i]);
    let syy = Integral::new(h, w, |i| y[i] * y[i]);
    let sxy = Integral::new(h, w, |i| x[i] * y[i]);

    let n = (k * k) as f64;
    let cov_norm = n / (n - 1.0);
    let c1 = (K1 * data_range).powi(2);
    let c2 = (K2 * data_range).powi(2);
    let mut total = 0.0;
    for r in 0..=h - k {
        for c in 0..=w - k {
            let mx = sx.window(r, c, k) / n;
            let my = sy.window(r, c, k) / n;
            let vx = cov_norm * (sxx.window(r, c, k) / n - mx * mx);
            let vy = cov_norm * (syy.window(r, c, k) / n - my * my);
            let cxy = cov_norm * (sxy.window(r, c, k) / n - mx * my);
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    Ok(100.0 * total / ((h - k + 1) * (w - k + 1)) as f64)
}

/// Summed-area table with a zero top row and left column.
struct Integral {
    w: usize,
    s: Vec<f64>,
}

impl Integral {
    fn new(h: usize, w: usize, f: impl Fn(usize) -> f64) -> Self {
        let stride = w + 1;
        let mut s = vec![0.0; (h + 1) * stride];
        for r in 0..h {
            let mut row = 0.0;
            for c in 0..w {
                row += f(r * w + c);
                s[(r + 1) * stride + c + 1] = s[r * stride + c + 1] + row;
            }
        }
        Self { w: stride, s }
    }

    fn window(&self, r: usize, c: usize, k: usize) -> f64 {
        let at = |r: usize, c: usize| self.s[r * self.w + c];
        at(r + k, c + k) - at(r, c + k) - at(r + k, c) + at(r, c)
    }
}
