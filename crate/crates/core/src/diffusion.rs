//! Noise schedules and the complex-valued diffusion steps.
//!
//! The diffusion acts on magnitude and phase separately. A forward step with
//! unit-modulus noise `eps` maps
//!
//! ```text
//! |z_t| = |z_{t-1}| sqrt(a_t) + |eps| sqrt(1 - a_t)
//! arg z_t = arg z_{t-1} + arg(eps) sqrt(1 - a_t)
//! ```
//!
//! and the single-shot training form uses the cumulative products `abar_t` in
//! place of `a_t`. Phase increments are applied by multiplying with a unit
//! complex number, so the result is always wrapped to (-pi, pi].

use num_complex::Complex;

use crate::complex::{principal_arg, ComplexImage, NoiseLaw, Real};
use crate::error::{Error, Result};

/// Largest admissible `beta_t`; keeps every `alpha_t` positive.
pub const MAX_BETA: f64 = 0.999;

/// Allowed deviation of a noise sample's modulus from 1.
pub const UNIT_NOISE_TOLERANCE: f64 = 1e-5;

/// Per-timestep `beta`, `alpha = 1 - beta` and `alpha_bar = prod alpha` for
/// `t = 1..=T`. `alpha_bar(0)` is 1.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Builds a schedule from raw betas, each in (0, 0.999].
    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::InvalidArgument("schedule needs T >= 1".into()));
        }
        if let Some((i, b)) = beta
            .iter()
            .enumerate()
            .find(|(_, &b)| !(b > 0.0 && b <= MAX_BETA))
        {
            return Err(Error::InvalidArgument(format!(
                "beta[{}] = {b} outside (0, {MAX_BETA}]",
                i + 1
            )));
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let alpha_bar = alpha
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            beta,
            alpha,
            alpha_bar,
        })
    }

    pub fn timesteps(&self) -> usize {
        self.beta.len()
    }

    fn index(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.timesteps() {
            return Err(Error::TimestepOutOfRange {
                t,
                t_max: self.timesteps(),
            });
        }
        Ok(t - 1)
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        Ok(self.beta[self.index(t)?])
    }

    pub fn alpha(&self, t: usize) -> Result<f64> {
        Ok(self.alpha[self.index(t)?])
    }

    /// Cumulative product up to `t`; `alpha_bar(0) == 1`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Ok(1.0);
        }
        Ok(self.alpha_bar[self.index(t)?])
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// Standard deviation of the sampler noise at step `t`.
    pub fn sigma(&self, t: usize, rule: SigmaRule) -> Result<f64> {
        let beta = self.beta(t)?;
        Ok(match rule {
            SigmaRule::FixedBeta => beta.sqrt(),
            SigmaRule::Zero => 0.0,
        })
    }

    /// CSV table `t,beta,alpha,alpha_bar` with one row per timestep.
    pub fn to_table(&self) -> String {
        let mut out = String::from("t,beta,alpha,alpha_bar\n");
        for i in 0..self.timesteps() {
            out.push_str(&format!(
                "{},{:e},{:e},{:e}\n",
                i + 1,
                self.beta[i],
                self.alpha[i],
                self.alpha_bar[i]
            ));
        }
        out
    }

    pub fn from_table(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let parse = |line: usize, message: String| Error::Parse {
            path: "<schedule table>".into(),
            line,
            message,
        };
        if lines.next().map(str::trim) != Some("t,beta,alpha,alpha_bar") {
            return Err(parse(1, "missing header t,beta,alpha,alpha_bar".into()));
        }
        let mut beta = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(parse(i + 2, format!("expected 4 fields, got {}", fields.len())));
            }
            let t: usize = fields[0]
                .parse()
                .map_err(|e| parse(i + 2, format!("bad t: {e}")))?;
            if t != beta.len() + 1 {
                return Err(parse(i + 2, format!("expected t = {}, got {t}", beta.len() + 1)));
            }
            beta.push(
                fields[1]
                    .parse()
                    .map_err(|e| parse(i + 2, format!("bad beta: {e}")))?,
            );
        }
        Self::from_betas(beta)
    }
}

/// Cosine schedule: `alpha_bar_t = f(t) / f(0)` with
/// `f(t) = cos^2(((t / T + s) / (1 + s)) * pi / 2)`, betas clipped to 0.999.
pub fn cosine_schedule(timesteps: usize, offset: f64) -> Result<NoiseSchedule> {
    if timesteps < 1 {
        return Err(Error::InvalidArgument("cosine schedule needs T >= 1".into()));
    }
    if !(offset > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cosine offset must be > 0, got {offset}"
        )));
    }
    let f = |t: usize| {
        let x = (t as f64 / timesteps as f64 + offset) / (1.0 + offset) * std::f64::consts::FRAC_PI_2;
        x.cos().powi(2)
    };
    let f0 = f(0);
    let beta = (1..=timesteps)
        .map(|t| (1.0 - (f(t) / f0) / (f(t - 1) / f0)).min(MAX_BETA))
        .collect();
    NoiseSchedule::from_betas(beta)
}

/// Betas interpolated linearly from `beta_start` to `beta_end`, endpoints included.
pub fn linear_schedule(timesteps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if timesteps < 1 {
        return Err(Error::InvalidArgument("linear schedule needs T >= 1".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )));
    }
    let beta = (0..timesteps)
        .map(|i| {
            if timesteps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (timesteps - 1) as f64
            }
        })
        .collect();
    NoiseSchedule::from_betas(beta)
}

/// Signal-to-noise trace `sqrt(abar_t) / sqrt(1 - abar_t)` for `t = 1..=T`.
pub fn snr_trace(schedule: &NoiseSchedule) -> Vec<f64> {
    schedule
        .alpha_bar
        .iter()
        .map(|&ab| ab.sqrt() / (1.0 - ab).sqrt())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScheduleKind {
    Cosine { offset: f64 },
    Linear { beta_start: f64, beta_end: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SigmaRule {
    /// `sigma_t = sqrt(beta_t)`.
    #[default]
    FixedBeta,
    Zero,
}

impl SigmaRule {
    pub fn name(self) -> &'static str {
        match self {
            SigmaRule::FixedBeta => "fixed-beta",
            SigmaRule::Zero => "zero",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fixed-beta" => Some(SigmaRule::FixedBeta),
            "zero" => Some(SigmaRule::Zero),
            _ => None,
        }
    }
}

/// How the noisy training input is composed from `z0` and `eps`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ForwardForm {
    /// Magnitude mixed with `|eps|`, phase perturbed by `sqrt(1 - abar) arg eps`.
    #[default]
    Polar,
    /// `sqrt(abar) z0 + sqrt(1 - abar) eps` in Cartesian form.
    Additive,
}

impl ForwardForm {
    pub fn name(self) -> &'static str {
        match self {
            ForwardForm::Polar => "polar",
            ForwardForm::Additive => "additive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "polar" => Some(ForwardForm::Polar),
            "additive" => Some(ForwardForm::Additive),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusionConfig {
    pub schedule: ScheduleKind,
    pub timesteps: usize,
    pub sigma_rule: SigmaRule,
    pub noise_law: NoiseLaw,
    pub forward_form: ForwardForm,
}

impl DiffusionConfig {
    /// Cosine schedule with offset 0.008 over `timesteps` steps.
    pub fn cosine(timesteps: usize) -> Self {
        Self {
            schedule: ScheduleKind::Cosine { offset: 0.008 },
            timesteps,
            sigma_rule: SigmaRule::FixedBeta,
            noise_law: NoiseLaw::Uniform,
            forward_form: ForwardForm::Polar,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timesteps < 1 {
            return Err(Error::InvalidArgument("diffusion needs T >= 1".into()));
        }
        if let ScheduleKind::Cosine { offset } = self.schedule {
            if !(offset > 0.0) {
                return Err(Error::InvalidArgument("cosine offset must be > 0".into()));
            }
        }
        Ok(())
    }

    pub fn build_schedule(&self) -> Result<NoiseSchedule> {
        self.validate()?;
        match self.schedule {
            ScheduleKind::Cosine { offset } => cosine_schedule(self.timesteps, offset),
            ScheduleKind::Linear {
                beta_start,
                beta_end,
            } => linear_schedule(self.timesteps, beta_start, beta_end),
        }
    }
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self::cosine(1000)
    }
}

fn check_unit_noise<T: Real>(eps: &ComplexImage<T>) -> Result<()> {
    for (index, z) in eps.data().iter().enumerate() {
        let modulus = z.norm().f64();
        if (modulus - 1.0).abs() > UNIT_NOISE_TOLERANCE {
            return Err(Error::NonUnitNoise { index, modulus });
        }
    }
    Ok(())
}

/// Sample with modulus `magnitude` whose phase is `arg z + dphi`.
///
/// The phase shift is applied as a rotation, so no explicit wrapping is needed.
#[inline]
fn rotate_to<T: Real>(z: Complex<T>, magnitude: T, dphi: T) -> Complex<T> {
    let m = z.norm();
    let dir = if m > T::zero() {
        z / m
    } else {
        Complex::new(T::one(), T::zero())
    };
    dir * Complex::new(dphi.cos(), dphi.sin()) * magnitude
}

fn polar_mix<T: Real>(
    z: &ComplexImage<T>,
    eps: &ComplexImage<T>,
    keep: f64,
) -> Result<ComplexImage<T>> {
    z.same_shape(eps)?;
    check_unit_noise(eps)?;
    let (ks, ns) = (T::of(keep.sqrt()), T::of((1.0 - keep).sqrt()));
    let data = z
        .data()
        .iter()
        .zip(eps.data())
        .map(|(&zp, &e)| {
            let magnitude = zp.norm() * ks + e.norm() * ns;
            rotate_to(zp, magnitude, principal_arg(e) * ns)
        })
        .collect();
    Ok(ComplexImage::from_parts(z.height(), z.width(), data))
}

/// One forward step with per-step `alpha_t`.
pub fn forward_step<T: Real>(
    z_prev: &ComplexImage<T>,
    eps: &ComplexImage<T>,
    alpha_t: f64,
) -> Result<ComplexImage<T>> {
    if !(alpha_t > 0.0 && alpha_t <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha_t must be in (0, 1], got {alpha_t}"
        )));
    }
    polar_mix(z_prev, eps, alpha_t)
}

/// Single-shot noisy sample at step `t` (polar form).
pub fn q_sample<T: Real>(
    z0: &ComplexImage<T>,
    t: usize,
    eps: &ComplexImage<T>,
    schedule: &NoiseSchedule,
) -> Result<ComplexImage<T>> {
    polar_mix(z0, eps, schedule.alpha_bar(t)?)
}

/// Cartesian closed form `sqrt(abar) z0 + sqrt(1 - abar) eps`.
pub fn q_sample_additive<T: Real>(
    z0: &ComplexImage<T>,
    t: usize,
    eps: &ComplexImage<T>,
    schedule: &NoiseSchedule,
) -> Result<ComplexImage<T>> {
    z0.same_shape(eps)?;
    check_unit_noise(eps)?;
    let ab = schedule.alpha_bar(t)?;
    let (ks, ns) = (T::of(ab.sqrt()), T::of((1.0 - ab).sqrt()));
    let data = z0
        .data()
        .iter()
        .zip(eps.data())
        .map(|(&z, &e)| z * ks + e * ns)
        .collect();
    Ok(ComplexImage::from_parts(z0.height(), z0.width(), data))
}

/// Training input for the configured forward form.
pub fn q_sample_with<T: Real>(
    form: ForwardForm,
    z0: &ComplexImage<T>,
    t: usize,
    eps: &ComplexImage<T>,
    schedule: &NoiseSchedule,
) -> Result<ComplexImage<T>> {
    match form {
        ForwardForm::Polar => q_sample(z0, t, eps, schedule),
        ForwardForm::Additive => q_sample_additive(z0, t, eps, schedule),
    }
}

/// One reverse step in polar coordinates.
///
/// With `c_t = (1 - a_t) / sqrt(1 - abar_t)`:
///
/// ```text
/// |z_{t-1}| = max(0, (|z_t| - c_t |eps_hat|) / sqrt(a_t) + sigma_t |eta|)
/// arg z_{t-1} = arg z_t - c_t arg(eps_hat) + sigma_t arg(eta)
/// ```
///
/// The phase correction is not divided by `sqrt(a_t)`: the training form
/// does not scale the phase by `sqrt(abar_t)`. `eta = None` means no sampler
/// noise (the final step).
pub fn reverse_step<T: Real>(
    z_t: &ComplexImage<T>,
    eps_hat: &ComplexImage<T>,
    t: usize,
    schedule: &NoiseSchedule,
    eta: Option<&ComplexImage<T>>,
    sigma_rule: SigmaRule,
) -> Result<ComplexImage<T>> {
    z_t.same_shape(eps_hat)?;
    if let Some(eta) = eta {
        z_t.same_shape(eta)?;
        check_unit_noise(eta)?;
    }
    let alpha = schedule.alpha(t)?;
    let alpha_bar = schedule.alpha_bar(t)?;
    let c = T::of((1.0 - alpha) / (1.0 - alpha_bar).sqrt());
    let inv_sqrt_alpha = T::of(1.0 / alpha.sqrt());
    let sigma = T::of(schedule.sigma(t, sigma_rule)?);
    let data = z_t
        .data()
        .iter()
        .zip(eps_hat.data())
        .enumerate()
        .map(|(i, (&z, &e))| {
            let (eta_mag, eta_arg) = match eta {
                Some(eta) => {
                    let n = eta.data()[i];
                    (n.norm(), principal_arg(n))
                }
                None => (T::zero(), T::zero()),
            };
            let magnitude =
                ((z.norm() - c * e.norm()) * inv_sqrt_alpha + sigma * eta_mag).max(T::zero());
            let dphi = -c * principal_arg(e) + sigma * eta_arg;
            rotate_to(z, magnitude, dphi)
        })
        .collect();
    Ok(ComplexImage::from_parts(z_t.height(), z_t.width(), data))
}
