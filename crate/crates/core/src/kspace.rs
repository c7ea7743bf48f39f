//! Centered orthonormal 2D FFTs, Cartesian undersampling masks, zerofilling
//! and data consistency.
//!
//! k-space is stored with the zero frequency at `(h / 2, w / 2)`. Masks act on
//! columns (the phase-encode axis).

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::{Complex, Complex32};
use rustfft::{FftDirection, FftPlanner};

use crate::complex::{to_polar, ComplexImage, PolarImage, Real, Rng};
use crate::error::{Error, Result};
use crate::tensor_io::{self, Tensor, TensorError};

/// Centered, orthonormal 2D DFT: `fftshift(fft2(ifftshift(x))) / sqrt(h w)`.
pub fn fft2c<T: Real>(image: &ComplexImage<T>) -> ComplexImage<T> {
    transform(image, FftDirection::Forward)
}

/// Exact inverse of [`fft2c`].
pub fn ifft2c<T: Real>(kspace: &ComplexImage<T>) -> ComplexImage<T> {
    transform(kspace, FftDirection::Inverse)
}

fn transform<T: Real>(image: &ComplexImage<T>, direction: FftDirection) -> ComplexImage<T> {
    let (h, w) = image.shape();
    // ifftshift: move the center sample to index 0.
    let mut buf = roll(image.data(), h, w, h.div_ceil(2), w.div_ceil(2));
    let mut planner = FftPlanner::<T>::new();

    let row_fft = planner.plan_fft(w, direction);
    let mut scratch = vec![Complex::default(); row_fft.get_inplace_scratch_len()];
    row_fft.process_with_scratch(&mut buf, &mut scratch);

    let mut cols = transpose(&buf, h, w);
    let col_fft = planner.plan_fft(h, direction);
    scratch.resize(col_fft.get_inplace_scratch_len(), Complex::default());
    col_fft.process_with_scratch(&mut cols, &mut scratch);
    let buf = transpose(&cols, w, h);

    let norm = T::one() / T::of(((h * w) as f64).sqrt());
    let mut out = roll(&buf, h, w, h / 2, w / 2);
    for z in &mut out {
        *z = *z * norm;
    }
    ComplexImage::from_parts(h, w, out)
}

/// Circular shift moving sample `(r, c)` to `((r + dr) % h, (c + dc) % w)`.
fn roll<T: Copy + Default>(data: &[T], h: usize, w: usize, dr: usize, dc: usize) -> Vec<T> {
    let mut out = vec![T::default(); data.len()];
    for r in 0..h {
        let nr = (r + dr) % h;
        for c in 0..w {
            out[nr * w + (c + dc) % w] = data[r * w + c];
        }
    }
    out
}

fn transpose<T: Copy + Default>(data: &[T], h: usize, w: usize) -> Vec<T> {
    let mut out = vec![T::default(); data.len()];
    for r in 0..h {
        for c in 0..w {
            out[c * h + r] = data[r * w + c];
        }
    }
    out
}

/// Column-wise Cartesian sampling pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    kept: Vec<bool>,
    acceleration: f64,
    center_fraction: f64,
    seed: u64,
}

impl SamplingMask {
    pub fn width(&self) -> usize {
        self.kept.len()
    }

    pub fn kept(&self) -> &[bool] {
        &self.kept
    }

    pub fn keeps(&self, col: usize) -> bool {
        self.kept[col]
    }

    pub fn acceleration(&self) -> f64 {
        self.acceleration
    }

    pub fn center_fraction(&self) -> f64 {
        self.center_fraction
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kept_count(&self) -> usize {
        self.kept.iter().filter(|&&k| k).count()
    }

    /// Number of fully sampled center columns, rounded half away from zero.
    pub fn center_count(&self) -> usize {
        center_count(self.width(), self.center_fraction)
    }

    /// Column range of the fully sampled center block.
    pub fn center_range(&self) -> std::ops::Range<usize> {
        center_range(self.width(), self.center_count())
    }

    pub fn all_kept(width: usize) -> Self {
        Self {
            kept: vec![true; width],
            acceleration: 1.0,
            center_fraction: 0.5,
            seed: 0,
        }
    }

    /// Builds a mask from an explicit column pattern. The center block
    /// implied by `center_fraction` must be fully kept.
    pub fn from_columns(kept: Vec<bool>, acceleration: f64, center_fraction: f64, seed: u64) -> Result<Self> {
        validate_mask_params(kept.len(), acceleration, center_fraction)?;
        let mask = Self {
            kept,
            acceleration,
            center_fraction,
            seed,
        };
        if mask.center_range().any(|c| !mask.kept[c]) {
            return Err(Error::InvalidArgument(
                "center block of the mask is not fully sampled".into(),
            ));
        }
        Ok(mask)
    }

    /// The `accel=<a> center=<f> seed=<s>` sidecar line.
    pub fn header_line(&self) -> String {
        format!(
            "accel={} center={} seed={}",
            self.acceleration, self.center_fraction, self.seed
        )
    }
}

fn center_count(width: usize, center_fraction: f64) -> usize {
    (center_fraction * width as f64).round() as usize
}

fn center_range(width: usize, count: usize) -> std::ops::Range<usize> {
    let start = (width - count + 1) / 2;
    start..start + count
}

fn validate_mask_params(width: usize, acceleration: f64, center_fraction: f64) -> Result<()> {
    if width < 1 {
        return Err(Error::InvalidArgument("mask width must be >= 1".into()));
    }
    if !(acceleration >= 1.0) || !acceleration.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "acceleration must be >= 1, got {acceleration}"
        )));
    }
    if !(center_fraction > 0.0 && center_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "center fraction must be in (0, 1), got {center_fraction}"
        )));
    }
    Ok(())
}

/// Random Cartesian mask: a fully sampled center block of
/// `round(center_fraction * width)` columns, every other column kept
/// independently with probability `(width / acceleration - center) / (width - center)`
/// clamped to [0, 1], so the expected kept count is `width / acceleration`
/// whenever the center fits in that budget.
pub fn make_cartesian_mask(
    width: usize,
    acceleration: f64,
    center_fraction: f64,
    rng: &mut Rng,
) -> Result<SamplingMask> {
    validate_mask_params(width, acceleration, center_fraction)?;
    let n_center = center_count(width, center_fraction);
    let center = center_range(width, n_center);
    let outside = width - n_center;
    let p = if outside == 0 {
        0.0
    } else {
        ((width as f64 / acceleration - n_center as f64) / outside as f64).clamp(0.0, 1.0)
    };
    let kept = (0..width)
        .map(|c| center.contains(&c) || rng.bernoulli(p))
        .collect();
    Ok(SamplingMask {
        kept,
        acceleration,
        center_fraction,
        seed: rng.seed(),
    })
}

fn check_mask_width<T: Real>(kspace: &ComplexImage<T>, mask: &SamplingMask) -> Result<()> {
    if mask.width() != kspace.width() {
        return Err(Error::shape(
            format!("mask width {}", kspace.width()),
            mask.width(),
        ));
    }
    Ok(())
}

/// Zeroes every column the mask drops; kept columns are copied unchanged.
pub fn apply_mask<T: Real>(kspace: &ComplexImage<T>, mask: &SamplingMask) -> Result<ComplexImage<T>> {
    check_mask_width(kspace, mask)?;
    let w = kspace.width();
    let zero = Complex::new(T::zero(), T::zero());
    let data = kspace
        .data()
        .iter()
        .enumerate()
        .map(|(i, &z)| if mask.keeps(i % w) { z } else { zero })
        .collect();
    Ok(ComplexImage::from_parts(kspace.height(), w, data))
}

/// Zerofilled reconstruction: inverse transform of the masked k-space, in polar form.
pub fn zerofill_recon<T: Real>(masked_kspace: &ComplexImage<T>) -> Result<PolarImage<T>> {
    to_polar(&ifft2c(masked_kspace))
}

/// Takes acquired samples on kept columns and predicted samples elsewhere.
pub fn data_consistency<T: Real>(
    predicted: &ComplexImage<T>,
    acquired: &ComplexImage<T>,
    mask: &SamplingMask,
) -> Result<ComplexImage<T>> {
    predicted.same_shape(acquired)?;
    check_mask_width(predicted, mask)?;
    let w = predicted.width();
    let data = predicted
        .data()
        .iter()
        .zip(acquired.data())
        .enumerate()
        .map(|(i, (&p, &a))| if mask.keeps(i % w) { a } else { p })
        .collect();
    Ok(ComplexImage::from_parts(predicted.height(), w, data))
}

pub fn mask_header_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

/// Writes the mask as a rank-1 CXT1 tensor of 0/1 values plus a `.hdr`
/// sidecar holding [`SamplingMask::header_line`].
pub fn write_mask(path: impl AsRef<Path>, mask: &SamplingMask) -> Result<()> {
    let path = path.as_ref();
    let data = mask
        .kept
        .iter()
        .map(|&k| Complex32::new(if k { 1.0 } else { 0.0 }, 0.0))
        .collect();
    tensor_io::write_raw(path, &Tensor::new(vec![mask.width()], data)?)?;
    let hdr = mask_header_path(path);
    fs::write(&hdr, format!("{}\n", mask.header_line())).map_err(|e| Error::io(&hdr, e))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<SamplingMask> {
    let path = path.as_ref();
    let t = tensor_io::read_raw(path)?;
    if t.rank() != 1 {
        return Err(TensorError::RankMismatch {
            expected: 1,
            found: t.rank(),
        }
        .into());
    }
    let hdr_path = mask_header_path(path);
    let text = fs::read_to_string(&hdr_path).map_err(|e| Error::io(&hdr_path, e))?;
    let parse_err = |message: String| Error::Parse {
        path: hdr_path.display().to_string(),
        line: 1,
        message,
    };
    let (mut accel, mut center, mut seed) = (None, None, None);
    for field in text.lines().next().unwrap_or("").split_whitespace() {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| parse_err(format!("expected key=value, got {field:?}")))?;
        let bad = |_| parse_err(format!("bad value for {k}: {v:?}"));
        match k {
            "accel" => accel = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "center" => center = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "seed" => seed = Some(v.parse::<u64>().map_err(|e| bad(e.to_string()))?),
            _ => return Err(parse_err(format!("unknown key {k:?}"))),
        }
    }
    let (Some(accel), Some(center), Some(seed)) = (accel, center, seed) else {
        return Err(parse_err("header needs accel, center and seed".into()));
    };
    let kept = t
        .data
        .iter()
        .map(|z| match (z.re, z.im) {
            (v, 0.0) if v == 1.0 => Ok(true),
            (v, 0.0) if v == 0.0 => Ok(false),
            _ => Err(Error::InvalidArgument(format!(
                "{}: mask values must be 0 or 1, got {z}",
                path.display()
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    SamplingMask::from_columns(kept, accel, center, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(h: usize, w: usize, seed: u64) -> ComplexImage<f32> {
        let mut rng = Rng::new(seed);
        ComplexImage::from_fn(h, w, |_, _| Complex::new(rng.normal() as f32, rng.normal() as f32))
    }

    /// Direct O(N^2) centered DFT in f64, independent of rustfft.
    fn naive_fft2c(z: &ComplexImage<f32>) -> ComplexImage<f64> {
        let (h, w) = z.shape();
        let (ch, cw) = ((h / 2) as f64, (w / 2) as f64);
        let norm = 1.0 / ((h * w) as f64).sqrt();
        ComplexImage::from_fn(h, w, |ku, kv| {
            let mut acc = Complex::new(0.0, 0.0);
            for r in 0..h {
                for c in 0..w {
                    let s = z.get(r, c);
                    let ang = -2.0
                        * std::f64::consts::PI
                        * ((ku as f64 - ch) * (r as f64 - ch) / h as f64
                            + (kv as f64 - cw) * (c as f64 - cw) / w as f64);
                    acc += Complex::new(s.re as f64, s.im as f64) * Complex::from_polar(1.0, ang);
                }
            }
            acc * norm
        })
    }

    #[test]
    fn center_impulse_goes_to_constant() {
        let mut img = ComplexImage::<f32>::zeros(8, 8).into_data();
        img[4 * 8 + 4] = Complex::new(1.0, 0.0);
        let k = fft2c(&ComplexImage::new(8, 8, img).unwrap());
        for z in k.data() {
            assert!((z.re - 0.125).abs() < 1e-7 && z.im.abs() < 1e-7);
        }
        let back = ifft2c(&k);
        assert!((back.get(4, 4).re - 1.0).abs() < 1e-6);
        assert!(back.energy() - 1.0 < 1e-6);
    }

    #[test]
    fn constant_kspace_goes_to_center_impulse() {
        let k = ComplexImage::from_fn(8, 8, |_, _| Complex::new(0.125f32, 0.0));
        let img = ifft2c(&k);
        for r in 0..8 {
            for c in 0..8 {
                let expect = if (r, c) == (4, 4) { 1.0 } else { 0.0 };
                assert!((img.get(r, c) - Complex::new(expect, 0.0)).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn matches_direct_dft_on_odd_and_even_sizes() {
        for &(h, w) in &[(5, 7), (6, 4), (9, 8)] {
            let z = random_image(h, w, (h * 31 + w) as u64);
            let fast = fft2c(&z).cast::<f64>();
            let slow = naive_fft2c(&z);
            assert!(fast.max_abs_diff(&slow).unwrap() < 1e-5, "{h}x{w}");
            let back = ifft2c(&fft2c(&z));
            assert!(back.max_abs_diff(&z).unwrap() < 1e-5);
        }
    }

    #[test]
    fn roundtrip_and_parseval_64() {
        let z = random_image(64, 64, 3);
        let k = fft2c(&z);
        assert!(ifft2c(&k).max_abs_diff(&z).unwrap() < 1e-5);
        let rel = (z.energy() - k.energy()).abs() / z.energy();
        assert!(rel < 1e-4);
        assert!(fft2c(&ifft2c(&k)).max_abs_diff(&k).unwrap() < 1e-5);
    }

    #[test]
    fn inverse_is_linear() {
        let k1 = random_image(16, 16, 1);
        let k2 = random_image(16, 16, 2);
        let a = Complex::new(0.7f32, -1.3);
        let lhs = ifft2c(&k1.scale(a).add(&k2).unwrap());
        let rhs = ifft2c(&k1).scale(a).add(&ifft2c(&k2)).unwrap();
        assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-5);
    }

    #[test]
    fn standard_mask_center_blocks() {
        let m = make_cartesian_mask(320, 4.0, 0.08, &mut Rng::new(0)).unwrap();
        assert_eq!(m.center_count(), 26);
        assert_eq!(m.center_range(), 147..173);
        assert!(m.center_range().all(|c| m.keeps(c)));
        let m = make_cartesian_mask(320, 8.0, 0.04, &mut Rng::new(0)).unwrap();
        assert_eq!(m.center_count(), 13);
    }

    #[test]
    fn acceleration_one_keeps_everything() {
        let m = make_cartesian_mask(100, 1.0, 0.08, &mut Rng::new(5)).unwrap();
        assert_eq!(m.kept_count(), 100);
    }

    #[test]
    fn mask_rejects_bad_parameters() {
        let mut rng = Rng::new(0);
        assert!(make_cartesian_mask(0, 4.0, 0.08, &mut rng).is_err());
        assert!(make_cartesian_mask(32, 0.5, 0.08, &mut rng).is_err());
        assert!(make_cartesian_mask(32, 4.0, 0.0, &mut rng).is_err());
        assert!(make_cartesian_mask(32, 4.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn mean_kept_count_matches_budget() {
        let mut rng = Rng::new(77);
        let total: usize = (0..1000)
            .map(|_| make_cartesian_mask(320, 4.0, 0.08, &mut rng).unwrap().kept_count())
            .sum();
        let mean = total as f64 / 1000.0;
        assert!((mean - 80.0).abs() <= 3.0, "mean {mean}");
    }

    #[test]
    fn apply_mask_matches_indicator_product() {
        let k = random_image(12, 20, 4);
        let m = make_cartesian_mask(20, 4.0, 0.1, &mut Rng::new(8)).unwrap();
        let masked = apply_mask(&k, &m).unwrap();
        for r in 0..12 {
            for c in 0..20 {
                let ind = if m.kept()[c] { 1.0 } else { 0.0 };
                let expect = k.get(r, c) * ind;
                assert_eq!(masked.get(r, c), expect);
            }
        }
        assert_eq!(apply_mask(&k, &SamplingMask::all_kept(20)).unwrap(), k);
    }

    #[test]
    fn center_only_mask_keeps_center_columns() {
        let mut kept = vec![false; 16];
        for c in 7..9 {
            kept[c] = true;
        }
        let m = SamplingMask::from_columns(kept, 8.0, 0.125, 0).unwrap();
        let k = ComplexImage::from_fn(4, 16, |_, _| Complex::new(1.0f32, 1.0));
        let masked = apply_mask(&k, &m).unwrap();
        for r in 0..4 {
            for c in 0..16 {
                assert_eq!(masked.get(r, c).re != 0.0, (7..9).contains(&c));
            }
        }
    }

    #[test]
    fn mask_width_mismatch() {
        let k = random_image(4, 8, 0);
        assert!(matches!(
            apply_mask(&k, &SamplingMask::all_kept(9)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn zerofill_of_full_kspace_is_magnitude() {
        let z = random_image(16, 16, 9);
        let p = zerofill_recon(&fft2c(&z)).unwrap();
        for (a, b) in p.magnitude().data().iter().zip(z.magnitude().data()) {
            assert!((a - b).abs() < 1e-5);
        }
        let p = zerofill_recon(&ComplexImage::<f32>::zeros(8, 8)).unwrap();
        assert!(p.magnitude().data().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn data_consistency_selects_columns() {
        let pred = random_image(6, 10, 1);
        let acq = random_image(6, 10, 2);
        let m = make_cartesian_mask(10, 2.0, 0.2, &mut Rng::new(3)).unwrap();
        let out = data_consistency(&pred, &acq, &m).unwrap();
        for r in 0..6 {
            for c in 0..10 {
                let src = if m.keeps(c) { &acq } else { &pred };
                assert_eq!(out.get(r, c), src.get(r, c));
            }
        }
        assert_eq!(data_consistency(&out, &acq, &m).unwrap(), out);
        assert_eq!(
            data_consistency(&pred, &acq, &SamplingMask::all_kept(10)).unwrap(),
            acq
        );
        let none = SamplingMask {
            kept: vec![false; 10],
            acceleration: 10.0,
            center_fraction: 0.01,
            seed: 0,
        };
        assert_eq!(data_consistency(&pred, &acq, &none).unwrap(), pred);
        assert!(data_consistency(&pred, &random_image(5, 10, 0), &m).is_err());
    }

    #[test]
    fn mask_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.cxt");
        let m = make_cartesian_mask(64, 4.0, 0.08, &mut Rng::new(12)).unwrap();
        write_mask(&path, &m).unwrap();
        let hdr = fs::read_to_string(mask_header_path(&path)).unwrap();
        assert_eq!(hdr.trim(), "accel=4 center=0.08 seed=12");
        assert_eq!(read_mask(&path).unwrap(), m);
    }

    mod props {
        use super::*;
        use crate::complex::Rng;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn center_block_size(width in 16usize..=1024, frac in 0.01f64..0.5, seed in 0u64..1000) {
                let m = make_cartesian_mask(width, 4.0, frac, &mut Rng::new(seed)).unwrap();
                let expect = (frac * width as f64).round() as usize;
                prop_assert_eq!(m.center_range().len(), expect);
                prop_assert!(m.center_range().all(|c| m.keeps(c)));
                prop_assert!(m.kept_count() >= expect);
            }

            #[test]
            fn data_consistency_idempotent(seed in 0u64..500) {
                let pred = random_image(4, 12, seed);
                let acq = random_image(4, 12, seed + 1000);
                let m = make_cartesian_mask(12, 3.0, 0.2, &mut Rng::new(seed)).unwrap();
                let once = data_consistency(&pred, &acq, &m).unwrap();
                let twice = data_consistency(&once, &acq, &m).unwrap();
                prop_assert_eq!(once, twice);
            }
        }
    }
}
