use num_complex::Complex;
use rustfft::FftPlanner;

use super::segmentation::BinaryMask;
use crate::complex::{wrap_phase, Grid, Real};
use crate::error::{Error, Result};

/// `sqrt(mean over mask of wrap(a - b)^2)`.
pub fn circular_rmse<T: Real>(phase_a: &Grid<T>, phase_b: &Grid<T>, mask: &BinaryMask) -> Result<f64> {
    phase_a.same_shape(phase_b)?;
    phase_a.same_shape(mask.grid())?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((a, b), &on) in phase_a.data().iter().zip(phase_b.data()).zip(mask.grid().data()) {
        if on {
            let d = wrap_phase(a.f64() - b.f64());
            sum += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty("phase comparison mask"));
    }
    Ok((sum / n as f64).sqrt())
}

/// Laplacian phase unwrapping.
///
/// The true Laplacian is estimated as `cos(p) lap(sin p) - sin(p) lap(cos p)`
/// with the 5-point stencil and mirrored edges, the Neumann Poisson problem is
/// solved with a cosine transform, and the smooth solution is then snapped to
/// the nearest field congruent to the input modulo 2 pi. The output differs
/// from the input by integer multiples of 2 pi only.
///
/// Inputs outside (-pi, pi] are accepted; only their value modulo 2 pi matters.
pub fn laplacian_unwrap<T: Real>(wrapped: &Grid<T>) -> Result<Grid<f64>> {
    if let Some(index) = wrapped.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "wrapped phase", index });
    }
    let (h, w) = wrapped.shape();
    let phi: Vec<f64> = wrapped.data().iter().map(|v| v.f64()).collect();
    let s: Vec<f64> = phi.iter().map(|p| p.sin()).collect();
    let c: Vec<f64> = phi.iter().map(|p| p.cos()).collect();
    let ls = laplacian(&s, h, w);
    let lc = laplacian(&c, h, w);
    let rho: Vec<f64> = (0..h * w).map(|i| c[i] * ls[i] - s[i] * lc[i]).collect();
    let smooth = poisson_neumann(&rho, h, w);

    // global offset of the smooth solution relative to the input, as a circular mean
    let offset = smooth
        .iter()
        .zip(&phi)
        .map(|(u, p)| Complex::from_polar(1.0, u - p))
        .sum::<Complex<f64>>()
        .arg();
    let tau = std::f64::consts::TAU;
    let out = smooth
        .iter()
        .zip(&phi)
        .map(|(u, p)| p + tau * ((u - offset - p) / tau).round())
        .collect();
    Grid::new(h, w, out)
}

/// 5-point Laplacian with half-sample mirrored edges (zero normal derivative).
fn laplacian(f: &[f64], h: usize, w: usize) -> Vec<f64> {
    let at = |r: isize, c: isize| {
        let r = r.clamp(0, h as isize - 1) as usize;
        let c = c.clamp(0, w as isize - 1) as usize;
        f[r * w + c]
    };
    let mut out = vec![0.0; h * w];
    for r in 0..h as isize {
        for c in 0..w as isize {
            out[r as usize * w + c as usize] = at(r - 1, c) + at(r + 1, c) + at(r, c - 1) + at(r, c + 1) - 4.0 * at(r, c);
        }
    }
    out
}

/// Solves `lap u = rho` with Neumann edges, fixing `mean(u) = 0`.
///
/// Mirroring to `2h x 2w` makes the problem periodic, where the discrete
/// Laplacian is diagonal in the Fourier basis; this is the cosine-transform
/// solver written with a complex FFT.
fn poisson_neumann(rho: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (eh, ew) = (2 * h, 2 * w);
    let mut buf = vec![Complex::new(0.0, 0.0); eh * ew];
    for r in 0..eh {
        let sr = if r < h { r } else { eh - 1 - r };
        for c in 0..ew {
            let sc = if c < w { c } else { ew - 1 - c };
            buf[r * ew + c] = Complex::new(rho[sr * w + sc], 0.0);
        }
    }
    fft2(&mut buf, eh, ew, false);
    let tau = std::f64::consts::TAU;
    for kr in 0..eh {
        let ar = 2.0 * (tau * kr as f64 / eh as f64).cos();
        for kc in 0..ew {
            let denom = ar + 2.0 * (tau * kc as f64 / ew as f64).cos() - 4.0;
            let z = &mut buf[kr * ew + kc];
            *z = if kr == 0 && kc == 0 { Complex::new(0.0, 0.0) } else { *z / denom };
        }
    }
    fft2(&mut buf, eh, ew, true);
    let norm = (eh * ew) as f64;
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        out.extend(buf[r * ew..r * ew + w].iter().map(|z| z.re / norm));
    }
    out
}

fn fft2(buf: &mut [Complex<f64>], h: usize, w: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    row.process(buf);
    let mut column = vec![Complex::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            column[r] = buf[r * w + c];
        }
        col.process(&mut column);
        for r in 0..h {
            buf[r * w + c] = column[r];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn interior_error(out: &Grid<f64>, truth: &Grid<f64>) -> f64 {
        let (h, w) = out.shape();
        let diff: Vec<f64> = out.data().iter().zip(truth.data()).map(|(a, b)| a - b).collect();
        let mean = diff.iter().sum::<f64>() / diff.len() as f64;
        let mut worst: f64 = 0.0;
        for r in 1..h - 1 {
            for c in 1..w - 1 {
                worst = worst.max((diff[r * w + c] - mean).abs());
            }
        }
        worst
    }

    #[test]
    fn circular_rmse_cases() {
        let a = Grid::from_fn(4, 4, |r, c| (r as f64 - c as f64) * 0.3);
        let all = BinaryMask::new(Grid::from_fn(4, 4, |_, _| true));
        assert_eq!(circular_rmse(&a, &a, &all).unwrap(), 0.0);
        assert!(circular_rmse(&a, &a.map(|v| v + 2.0 * PI), &all).unwrap() < 1e-12);
        assert!((circular_rmse(&a.map(|v| v + PI / 2.0), &a, &all).unwrap() - PI / 2.0).abs() < 1e-12);
        let none = BinaryMask::new(Grid::from_fn(4, 4, |_, _| false));
        assert!(circular_rmse(&a, &a, &none).is_err());
    }

    #[test]
    fn poisson_solver_inverts_laplacian() {
        let (h, w) = (9, 12);
        let u: Vec<f64> = (0..h * w).map(|i| ((i * 7919) % 101) as f64 / 101.0).collect();
        let mean = u.iter().sum::<f64>() / u.len() as f64;
        let u: Vec<f64> = u.iter().map(|v| v - mean).collect();
        let back = poisson_neumann(&laplacian(&u, h, w), h, w);
        for (a, b) in back.iter().zip(&u) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn smooth_field_is_unchanged() {
        let truth = Grid::from_fn(32, 32, |r, c| 0.8 * ((r as f64) / 9.0).sin() * ((c as f64) / 7.0).cos());
        let out = laplacian_unwrap(&truth).unwrap();
        assert!(interior_error(&out, &truth) < 1e-2);
    }

    #[test]
    fn wrapped_ramp_is_recovered() {
        let truth = Grid::from_fn(64, 64, |_, c| 0.15 * c as f64);
        let out = laplacian_unwrap(&truth.map(|v| wrap_phase(*v))).unwrap();
        assert!(interior_error(&out, &truth) < 1e-2);
    }

    #[test]
    fn full_turns_on_a_block_do_not_matter() {
        let field = Grid::from_fn(24, 24, |r, c| 0.1 * r as f64 - 0.05 * c as f64);
        let wrapped = field.map(|v| wrap_phase(*v));
        let shifted = Grid::from_fn(24, 24, |r, c| *wrapped.get(r, c) + if (8..16).contains(&r) { 2.0 * PI } else { 0.0 });
        let a = laplacian_unwrap(&wrapped).unwrap();
        let b = laplacian_unwrap(&shifted).unwrap();
        assert!(interior_error(&a, &b) < 1e-9);
    }

    #[test]
    fn rejects_non_finite() {
        let mut g = Grid::from_fn(4, 4, |_, _| 0.0f64);
        g.data_mut()[3] = f64::NAN;
        assert!(laplacian_unwrap(&g).is_err());
    }
}
