use num_complex::Complex;

use super::batch::ComplexBatch;
use crate::complex::Real;
use crate::error::{Error, Result};

/// Mean over all samples of `|eps - eps_hat|^2`, accumulated in f64.
pub fn loss_mse_complex<T: Real>(eps: &ComplexBatch<T>, eps_hat: &ComplexBatch<T>) -> Result<f64> {
    eps.same_shape(eps_hat)?;
    let sum: f64 = eps
        .data()
        .iter()
        .zip(eps_hat.data())
        .map(|(a, b)| (a - b).norm_sqr().f64())
        .sum();
    let loss = sum / eps.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            what: "loss",
            index: 0,
        });
    }
    Ok(loss)
}

/// Loss and its gradient with respect to `eps_hat`: `2 (eps_hat - eps) / N`.
pub fn loss_mse_grad<T: Real>(eps: &ComplexBatch<T>, eps_hat: &ComplexBatch<T>) -> Result<(f64, ComplexBatch<T>)> {
    let loss = loss_mse_complex(eps, eps_hat)?;
    let k = T::of(2.0 / eps.len() as f64);
    let g: Vec<Complex<T>> = eps
        .data()
        .iter()
        .zip(eps_hat.data())
        .map(|(a, b)| (b - a) * k)
        .collect();
    Ok((loss, ComplexBatch::from_parts(eps.shape(), g)))
}
