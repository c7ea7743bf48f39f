//! Training and sampling of the magnitude-conditioned phase denoiser.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::complex::{sample_phase_noise, ComplexImage, Grid, PolarImage, Real, Rng};
use crate::cvnn::checkpoint::{load_checkpoint, read_model_cfg, save_checkpoint};
use crate::cvnn::{
    adam_step, loss_mse_grad, unet_backward, unet_forward, AdamConfig, ComplexBatch, CvUNetConfig, CvUNetParams, Mode,
    OptimizerState,
};
use crate::diffusion::{
    q_sample_with, reverse_step, DiffusionConfig, ForwardForm, NoiseSchedule, ScheduleKind, SigmaRule,
};
use crate::complex::NoiseLaw;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Toy,
    PaperFull,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Toy => "toy",
            Preset::PaperFull => "paper-full",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "toy" => Some(Preset::Toy),
            "paper-full" => Some(Preset::PaperFull),
            _ => None,
        }
    }
}

pub const TOY_MAX_SIZE: usize = 64;
pub const TOY_MAX_TIMESTEPS: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub preset: Preset,
    pub epochs: usize,
    pub batch_size: usize,
    /// Stops early after this many optimizer steps when set.
    pub max_steps: Option<usize>,
    pub adam: AdamConfig,
    pub dropout: f64,
    pub diffusion: DiffusionConfig,
    pub image_size: usize,
    pub dataset_size: usize,
    pub depth: usize,
    pub base_channels: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// 200 phantoms of 32x32, T = 50, 8 epochs of 25 steps.
    pub fn toy() -> Self {
        Self {
            preset: Preset::Toy,
            epochs: 8,
            batch_size: 8,
            max_steps: None,
            adam: AdamConfig {
                lr: 2e-3,
                gamma: 0.9,
                ..AdamConfig::default()
            },
            dropout: 0.0,
            diffusion: DiffusionConfig::cosine(50),
            image_size: 32,
            dataset_size: 200,
            depth: 2,
            base_channels: 8,
            seed: 0,
        }
    }

    /// Full-scale training setup. Far beyond CPU budgets; kept for reference.
    pub fn paper_full() -> Self {
        Self {
            preset: Preset::PaperFull,
            epochs: 200,
            batch_size: 128,
            max_steps: None,
            adam: AdamConfig::default(),
            dropout: 0.2,
            diffusion: DiffusionConfig::cosine(1000),
            image_size: 256,
            dataset_size: 10_000,
            depth: 4,
            base_channels: 64,
            seed: 0,
        }
    }

    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Toy => Self::toy(),
            Preset::PaperFull => Self::paper_full(),
        }
    }

    pub fn model_config(&self) -> CvUNetConfig {
        CvUNetConfig {
            dropout: self.dropout,
            ..CvUNetConfig::phasegen(self.depth, self.base_channels, self.diffusion.timesteps)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("image_size", self.image_size),
            ("dataset_size", self.dataset_size),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{k} must be positive")));
            }
        }
        if self.max_steps == Some(0) {
            return Err(Error::InvalidArgument("max_steps must be positive".into()));
        }
        if self.preset == Preset::Toy
            && (self.image_size > TOY_MAX_SIZE || self.diffusion.timesteps > TOY_MAX_TIMESTEPS)
        {
            return Err(Error::InvalidArgument(format!(
                "toy preset is limited to {TOY_MAX_SIZE}x{TOY_MAX_SIZE} and T <= {TOY_MAX_TIMESTEPS}"
            )));
        }
        self.diffusion.validate()?;
        let model = self.model_config();
        model.validate()?;
        model.check_size(self.image_size, self.image_size)
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.dataset_size.div_ceil(self.batch_size)
    }

    pub fn total_steps(&self) -> usize {
        let full = self.epochs * self.steps_per_epoch();
        self.max_steps.map_or(full, |m| m.min(full))
    }

    /// Builds a config from `key = value` pairs. A `preset` key selects the
    /// starting point, every other key overrides it; unknown keys are errors.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut cfg = match pairs.iter().find(|(k, _)| k == "preset") {
            Some((_, v)) => Self::preset(Preset::parse(v).ok_or_else(|| bad_value("preset", v))?),
            None => Self::toy(),
        };
        for (k, v) in pairs {
            match k.as_str() {
                "preset" => {}
                "epochs" => cfg.epochs = parse(k, v)?,
                "batch_size" => cfg.batch_size = parse(k, v)?,
                "max_steps" => cfg.max_steps = Some(parse(k, v)?),
                "lr" => cfg.adam.lr = parse(k, v)?,
                "lr_gamma" => cfg.adam.gamma = parse(k, v)?,
                "beta1" => cfg.adam.beta1 = parse(k, v)?,
                "beta2" => cfg.adam.beta2 = parse(k, v)?,
                "dropout" => cfg.dropout = parse(k, v)?,
                "timesteps" => cfg.diffusion.timesteps = parse(k, v)?,
                "schedule" => {
                    cfg.diffusion.schedule = match v.as_str() {
                        "cosine" => ScheduleKind::Cosine { offset: 0.008 },
                        "linear" => ScheduleKind::Linear {
                            beta_start: 1e-4,
                            beta_end: 0.02,
                        },
                        _ => return Err(bad_value(k, v)),
                    }
                }
                "sigma_rule" => cfg.diffusion.sigma_rule = SigmaRule::parse(v).ok_or_else(|| bad_value(k, v))?,
                "noise_law" => cfg.diffusion.noise_law = NoiseLaw::parse(v).ok_or_else(|| bad_value(k, v))?,
                "forward_form" => cfg.diffusion.forward_form = ForwardForm::parse(v).ok_or_else(|| bad_value(k, v))?,
                "image_size" => cfg.image_size = parse(k, v)?,
                "dataset_size" => cfg.dataset_size = parse(k, v)?,
                "depth" => cfg.depth = parse(k, v)?,
                "base_channels" => cfg.base_channels = parse(k, v)?,
                "seed" => cfg.seed = parse(k, v)?,
                other => return Err(Error::InvalidArgument(format!("unknown config key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let d = &self.diffusion;
        let schedule = match d.schedule {
            ScheduleKind::Cosine { .. } => "cosine",
            ScheduleKind::Linear { .. } => "linear",
        };
        let mut out = vec![
            ("preset", self.preset.name().to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", self.adam.lr.to_string()),
            ("lr_gamma", self.adam.gamma.to_string()),
            ("beta1", self.adam.beta1.to_string()),
            ("beta2", self.adam.beta2.to_string()),
            ("dropout", self.dropout.to_string()),
            ("timesteps", d.timesteps.to_string()),
            ("schedule", schedule.to_string()),
            ("sigma_rule", d.sigma_rule.name().to_string()),
            ("noise_law", d.noise_law.name().to_string()),
            ("forward_form", d.forward_form.name().to_string()),
            ("image_size", self.image_size.to_string()),
            ("dataset_size", self.dataset_size.to_string()),
            ("depth", self.depth.to_string()),
            ("base_channels", self.base_channels.to_string()),
            ("seed", self.seed.to_string()),
        ];
        if let Some(m) = self.max_steps {
            out.push(("max_steps", m.to_string()));
        }
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

pub(crate) fn bad_value(key: &str, value: &str) -> Error {
    Error::InvalidArgument(format!("invalid value `{value}` for `{key}`"))
}

pub(crate) fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad_value(key, value))
}

/// One row per optimizer step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTrace {
    pub rows: Vec<LossRow>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRow {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

impl LossTrace {
    pub fn losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.loss).collect()
    }

    /// Mean loss over the first `n` steps.
    pub fn head_mean(&self, n: usize) -> f64 {
        let n = n.min(self.rows.len());
        self.rows[..n].iter().map(|r| r.loss).sum::<f64>() / n as f64
    }

    /// Mean loss over the last `n` steps.
    pub fn tail_mean(&self, n: usize) -> f64 {
        let n = n.min(self.rows.len());
        self.rows[self.rows.len() - n..].iter().map(|r| r.loss).sum::<f64>() / n as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,loss,lr\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{}", r.step, r.loss, r.lr);
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Network input `[z_t, |z0|]` for one sample, with `z_t` from the shared
/// forward-process code path.
pub fn training_input<T: Real>(
    z0: &ComplexImage<T>,
    t: usize,
    eps: &ComplexImage<T>,
    schedule: &NoiseSchedule,
    form: ForwardForm,
) -> Result<ComplexBatch<T>> {
    let z_t = q_sample_with(form, z0, t, eps, schedule)?;
    let cond = ComplexImage::from_real(&z0.magnitude());
    ComplexBatch::from_channels(&[&z_t, &cond])
}

/// Trains the denoiser on complex images `z0`.
///
/// Every step draws, per batch element, `t` uniform on `1..=T` and unit noise
/// `eps`, regresses the network output on `eps` with the complex MSE and takes
/// one Adam step. The dataset is reshuffled each epoch and the learning rate
/// decays by `gamma` per epoch. All randomness comes from `config.seed`.
pub fn train_phasegen(dataset: &[ComplexImage<f32>], config: &TrainConfig) -> Result<(CvUNetParams<f32>, LossTrace)> {
    train_phasegen_with(dataset, config, |_| {})
}

/// As [`train_phasegen`], calling `progress` after every step.
pub fn train_phasegen_with(
    dataset: &[ComplexImage<f32>],
    config: &TrainConfig,
    mut progress: impl FnMut(&LossRow),
) -> Result<(CvUNetParams<f32>, LossTrace)> {
    config.validate()?;
    let first = dataset.first().ok_or(Error::Empty("training dataset"))?;
    let (h, w) = first.shape();
    for z in dataset {
        first.same_shape(z)?;
    }
    let schedule = config.diffusion.build_schedule()?;
    let t_max = schedule.timesteps();
    let mut rng = Rng::new(config.seed);
    let mut net = CvUNetParams::<f32>::init(&config.model_config(), &mut rng.fork(0))?;
    net.config().check_size(h, w)?;
    let mut opt = OptimizerState::new(&net.store, config.adam)?;
    let mut trace = LossTrace::default();
    let total = config.total_steps();
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    'epochs: for _epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(config.batch_size) {
            if trace.rows.len() == total {
                break 'epochs;
            }
            let mut inputs = Vec::with_capacity(chunk.len());
            let mut noises = Vec::with_capacity(chunk.len());
            let mut ts = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let t = rng.int_inclusive(1, t_max);
                let eps = sample_phase_noise::<f32>(h, w, config.diffusion.noise_law, &mut rng)?;
                inputs.push(training_input(&dataset[i], t, &eps, &schedule, config.diffusion.forward_form)?);
                noises.push(ComplexBatch::from_channels(&[&eps])?);
                ts.push(t);
            }
            let x = ComplexBatch::stack(&inputs)?;
            let eps = ComplexBatch::stack(&noises)?;
            let mode = if config.dropout > 0.0 { Mode::Train(&mut rng) } else { Mode::Eval };
            let record = unet_forward(&x, &ts, &net, mode)?;
            let (loss, grad) = loss_mse_grad(&eps, &record.output)?;
            let step = trace.rows.len();
            if !loss.is_finite() {
                return Err(Error::Diverged { step, loss });
            }
            let grads = unet_backward(&grad, &record, &net)?;
            let row = LossRow { step, loss, lr: opt.lr() };
            adam_step(&mut net.store, &grads, &mut opt)?;
            progress(&row);
            trace.rows.push(row);
        }
        opt.end_epoch();
    }
    Ok((net, trace))
}

/// Draws a phase for `magnitude` by running the reverse process from pure
/// noise with the magnitude as a fixed conditioning channel. The returned
/// magnitude is the input, unchanged.
pub fn sample_phase(
    magnitude: &Grid<f32>,
    net: &CvUNetParams<f32>,
    diffusion: &DiffusionConfig,
    rng: &mut Rng,
) -> Result<PolarImage<f32>> {
    let mut out = sample_phases(std::slice::from_ref(magnitude), net, diffusion, rng)?;
    Ok(out.pop().expect("one output per input"))
}

/// Batched [`sample_phase`]; all magnitudes must share a shape. Noise is
/// drawn image by image in input order at each step.
pub fn sample_phases(
    magnitudes: &[Grid<f32>],
    net: &CvUNetParams<f32>,
    diffusion: &DiffusionConfig,
    rng: &mut Rng,
) -> Result<Vec<PolarImage<f32>>> {
    let first = magnitudes.first().ok_or(Error::Empty("magnitude list"))?;
    let (h, w) = first.shape();
    for m in magnitudes {
        first.same_shape(m)?;
        if let Some(index) = m.data().iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite { what: "conditioning magnitude", index });
        }
    }
    let cfg = net.config();
    if cfg.in_channels != 2 || cfg.out_channels != 1 {
        return Err(Error::shape("denoiser with 2 input and 1 output channels", format!("{} -> {}", cfg.in_channels, cfg.out_channels)));
    }
    cfg.check_size(h, w)?;
    let schedule = diffusion.build_schedule()?;
    if cfg.time_channels > 0 && cfg.timesteps != schedule.timesteps() {
        return Err(Error::InvalidArgument(format!(
            "network trained for T = {}, sampler configured for T = {}",
            cfg.timesteps,
            schedule.timesteps()
        )));
    }
    let conds: Vec<ComplexImage<f32>> = magnitudes.iter().map(ComplexImage::from_real).collect();
    let mut z: Vec<ComplexImage<f32>> = magnitudes
        .iter()
        .map(|_| sample_phase_noise(h, w, diffusion.noise_law, rng))
        .collect::<Result<_>>()?;
    for t in (1..=schedule.timesteps()).rev() {
        let x = ComplexBatch::stack(
            &z.iter()
                .zip(&conds)
                .map(|(zi, c)| ComplexBatch::from_channels(&[zi, c]))
                .collect::<Result<Vec<_>>>()?,
        )?;
        let ts = vec![t; z.len()];
        let eps_hat = unet_forward(&x, &ts, net, Mode::Eval)?.output;
        for (n, zi) in z.iter_mut().enumerate() {
            let sampler_noise = if t > 1 {
                Some(sample_phase_noise(h, w, diffusion.noise_law, rng)?)
            } else {
                None
            };
            *zi = reverse_step(zi, &eps_hat.image(n, 0), t, &schedule, sampler_noise.as_ref(), diffusion.sigma_rule)?;
        }
    }
    z.iter()
        .zip(magnitudes)
        .map(|(zi, m)| PolarImage::new(m.clone(), zi.phase()))
        .collect()
}

/// Writes the parameters and the training config (which fixes the network
/// layout and the diffusion settings) to `dir`.
pub fn save_phasegen(dir: impl AsRef<Path>, net: &CvUNetParams<f32>, config: &TrainConfig) -> Result<()> {
    save_checkpoint(dir, &net.store, &config.to_pairs())
}

pub fn load_phasegen(dir: impl AsRef<Path>) -> Result<(CvUNetParams<f32>, TrainConfig)> {
    let dir = dir.as_ref();
    let config = TrainConfig::from_pairs(&read_model_cfg(dir)?)?;
    let mut net = CvUNetParams::init(&config.model_config(), &mut Rng::new(0))?;
    load_checkpoint(dir, &mut net.store)?;
    Ok((net, config))
}
