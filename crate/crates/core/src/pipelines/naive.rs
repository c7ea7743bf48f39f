use std::f64::consts::PI;

use crate::complex::{wrap_phase, Grid, PolarImage, Real, Rng};
use crate::error::{Error, Result};

/// Min-max normalization. A constant image maps to 1 where it is positive
/// and to 0 otherwise.
pub fn normalize_magnitude<T: Real>(magnitude: &Grid<T>) -> Grid<f64> {
    let (lo, hi) = magnitude
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.f64()), hi.max(v.f64())));
    if hi > lo {
        magnitude.map(|v| (v.f64() - lo) / (hi - lo))
    } else {
        magnitude.map(|v| if v.f64() > 0.0 { 1.0 } else { 0.0 })
    }
}

/// Handcrafted baseline: `[sin(2 pi x / N) + cos(2 pi y / N)] * M + naive_noise`,
/// wrapped. `x` is the column index, `y` the row index, `M` the min-max
/// normalized magnitude and `naive_noise ~ N(0, sigma^2)` per pixel. The
/// magnitude is returned unchanged.
pub fn naive_phase<T: Real>(magnitude: &Grid<T>, sigma: f64, rng: &mut Rng) -> Result<PolarImage<T>> {
    let (h, w) = magnitude.shape();
    if h != w {
        return Err(Error::shape(format!("square grid ({h}x{h})"), format!("{h}x{w}")));
    }
    if let Some(index) = magnitude.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "magnitude", index });
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    let n = w as f64;
    let m_hat = normalize_magnitude(magnitude);
    let phase = Grid::from_fn(h, w, |y, x| {
        let clean = ((2.0 * PI * x as f64 / n).sin() + (2.0 * PI * y as f64 / n).cos()) * m_hat.get(y, x);
        let naive_noise = if sigma > 0.0 { sigma * rng.normal() } else { 0.0 };
        T::of(wrap_phase(clean + naive_noise))
    });
    PolarImage::new(magnitude.clone(), phase)
}
