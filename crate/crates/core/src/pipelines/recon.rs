//! Undersampled reconstruction: a cascade of residual complex U-Nets, each
//! followed by a data-consistency projection onto the acquired k-space columns.

use std::path::Path;

use super::phasegen::{bad_value, parse, LossRow, LossTrace};
use crate::complex::{ComplexImage, Rng};
use crate::cvnn::checkpoint::{load_checkpoint, read_model_cfg, save_checkpoint};
use crate::cvnn::{adam_step, loss_mse_grad, AdamConfig, ComplexBatch, CvUNetConfig, Mode, OptimizerState, ParamStore, Tape, UNetLayout, Var};
use crate::error::{Error, Result};
use crate::kspace::{apply_mask, data_consistency, fft2c, ifft2c, make_cartesian_mask, SamplingMask};

#[derive(Clone, Debug, PartialEq)]
pub struct ReconConfig {
    pub image_size: usize,
    pub acceleration: f64,
    pub center_fraction: f64,
    /// U-Net + data-consistency stages.
    pub stages: usize,
    pub depth: usize,
    pub base_channels: usize,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_steps: Option<usize>,
    pub dataset_size: usize,
    /// Draw a fresh mask for every training example at every step instead of
    /// keeping one mask per example.
    pub redraw_masks: bool,
    pub seed: u64,
}

impl ReconConfig {
    /// 32x32 phantoms at x4 with 8% center, 200 steps.
    pub fn toy() -> Self {
        Self {
            image_size: 32,
            acceleration: 4.0,
            center_fraction: 0.08,
            stages: 2,
            depth: 2,
            base_channels: 8,
            adam: AdamConfig {
                lr: 2e-3,
                gamma: 0.9,
                ..AdamConfig::default()
            },
            epochs: 8,
            batch_size: 8,
            max_steps: None,
            dataset_size: 200,
            redraw_masks: false,
            seed: 0,
        }
    }

    pub fn model_config(&self) -> CvUNetConfig {
        CvUNetConfig::recon(self.depth, self.base_channels)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in [
            ("image_size", self.image_size),
            ("stages", self.stages),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("dataset_size", self.dataset_size),
        ] {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{k} must be positive")));
            }
        }
        if self.max_steps == Some(0) {
            return Err(Error::InvalidArgument("max_steps must be positive".into()));
        }
        // mask parameters are checked by drawing one
        make_cartesian_mask(self.image_size, self.acceleration, self.center_fraction, &mut Rng::new(0))?;
        let model = self.model_config();
        model.validate()?;
        model.check_size(self.image_size, self.image_size)
    }

    pub fn total_steps(&self) -> usize {
        let full = self.epochs * self.dataset_size.div_ceil(self.batch_size);
        self.max_steps.map_or(full, |m| m.min(full))
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::toy();
        for (k, v) in pairs {
            match k.as_str() {
                "image_size" => cfg.image_size = parse(k, v)?,
                "acceleration" => cfg.acceleration = parse(k, v)?,
                "center_fraction" => cfg.center_fraction = parse(k, v)?,
                "stages" => cfg.stages = parse(k, v)?,
                "depth" => cfg.depth = parse(k, v)?,
                "base_channels" => cfg.base_channels = parse(k, v)?,
                "lr" => cfg.adam.lr = parse(k, v)?,
                "lr_gamma" => cfg.adam.gamma = parse(k, v)?,
                "beta1" => cfg.adam.beta1 = parse(k, v)?,
                "beta2" => cfg.adam.beta2 = parse(k, v)?,
                "epochs" => cfg.epochs = parse(k, v)?,
                "batch_size" => cfg.batch_size = parse(k, v)?,
                "max_steps" => cfg.max_steps = Some(parse(k, v)?),
                "dataset_size" => cfg.dataset_size = parse(k, v)?,
                "redraw_masks" => cfg.redraw_masks = parse(k, v).map_err(|_| bad_value(k, v))?,
                "seed" => cfg.seed = parse(k, v)?,
                other => return Err(Error::InvalidArgument(format!("unknown config key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("image_size", self.image_size.to_string()),
            ("acceleration", self.acceleration.to_string()),
            ("center_fraction", self.center_fraction.to_string()),
            ("stages", self.stages.to_string()),
            ("depth", self.depth.to_string()),
            ("base_channels", self.base_channels.to_string()),
            ("lr", self.adam.lr.to_string()),
            ("lr_gamma", self.adam.gamma.to_string()),
            ("beta1", self.adam.beta1.to_string()),
            ("beta2", self.adam.beta2.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("dataset_size", self.dataset_size.to_string()),
            ("redraw_masks", self.redraw_masks.to_string()),
            ("seed", self.seed.to_string()),
        ];
        if let Some(m) = self.max_steps {
            out.push(("max_steps", m.to_string()));
        }
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

/// A fully sampled image with its mask and acquired (masked) k-space.
#[derive(Clone, Debug)]
pub struct ReconSample {
    pub target: ComplexImage<f32>,
    pub mask: SamplingMask,
    pub acquired: ComplexImage<f32>,
}

impl ReconSample {
    pub fn new(target: ComplexImage<f32>, mask: SamplingMask) -> Result<Self> {
        let acquired = apply_mask(&fft2c(&target), &mask)?;
        Ok(Self { target, mask, acquired })
    }

    pub fn zerofilled(&self) -> ComplexImage<f32> {
        ifft2c(&self.acquired)
    }
}

/// Pairs every image with its own mask; mask `i` is drawn from
/// `Rng::new(mask_seed).fork(i)`.
pub fn prepare_recon_samples(images: &[ComplexImage<f32>], acceleration: f64, center_fraction: f64, mask_seed: u64) -> Result<Vec<ReconSample>> {
    let base = Rng::new(mask_seed);
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let mask = make_cartesian_mask(img.width(), acceleration, center_fraction, &mut base.fork(i as u64))?;
            ReconSample::new(img.clone(), mask)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ReconNet {
    config: ReconConfig,
    stages: Vec<UNetLayout>,
    pub store: ParamStore<f32>,
}

/// Output k-space with the acquired columns copied in, and its image.
#[derive(Clone, Debug)]
pub struct ReconOutput {
    pub kspace: ComplexImage<f32>,
    pub image: ComplexImage<f32>,
}

impl ReconNet {
    pub fn init(config: &ReconConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let model = config.model_config();
        let stages = (0..config.stages)
            .map(|s| UNetLayout::init(&model, &mut store, &format!("stage{s}."), rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            config: config.clone(),
            stages,
            store,
        })
    }

    pub fn config(&self) -> &ReconConfig {
        &self.config
    }

    pub fn parameter_count(&self) -> usize {
        self.store.parameter_count()
    }

    /// Records the cascade; the returned var is the image after the final
    /// data-consistency projection. `before_dc` receives the last stage's raw
    /// output.
    fn record(&self, samples: &[&ReconSample]) -> Result<(Tape<f32>, Var, Var)> {
        let zf: Vec<ComplexBatch<f32>> = samples
            .iter()
            .map(|s| ComplexBatch::from_channels(&[&s.zerofilled()]))
            .collect::<Result<_>>()?;
        let acquired: Vec<ComplexImage<f32>> = samples.iter().map(|s| s.acquired.clone()).collect();
        let masks: Vec<SamplingMask> = samples.iter().map(|s| s.mask.clone()).collect();
        let mut tape = Tape::new(&self.store);
        let mut h = tape.input(ComplexBatch::stack(&zf)?);
        let mut before_dc = h;
        for stage in &self.stages {
            before_dc = stage.forward(&mut tape, &self.store, h, &[], &mut Mode::Eval)?;
            h = tape.data_consistency(before_dc, &acquired, &masks)?;
        }
        Ok((tape, h, before_dc))
    }

    /// Reconstructs one acquisition. The output k-space equals `acquired` on
    /// every kept column bit for bit.
    pub fn reconstruct(&self, acquired: &ComplexImage<f32>, mask: &SamplingMask) -> Result<ReconOutput> {
        let sample = ReconSample {
            target: ComplexImage::zeros(acquired.height(), acquired.width()),
            mask: mask.clone(),
            acquired: apply_mask(acquired, mask)?,
        };
        let (tape, _, before_dc) = self.record(&[&sample])?;
        let kspace = data_consistency(&fft2c(&tape.value(before_dc).image(0, 0)), &sample.acquired, mask)?;
        let image = ifft2c(&kspace);
        Ok(ReconOutput { kspace, image })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        save_checkpoint(dir, &self.store, &self.config.to_pairs())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let config = ReconConfig::from_pairs(&read_model_cfg(dir)?)?;
        let mut net = Self::init(&config, &mut Rng::new(0))?;
        load_checkpoint(dir, &mut net.store)?;
        Ok(net)
    }
}

/// Supervised training on image-domain complex MSE between the cascade
/// output and the fully sampled target.
pub fn train_recon(samples: &[ReconSample], config: &ReconConfig) -> Result<(ReconNet, LossTrace)> {
    config.validate()?;
    let first = samples.first().ok_or(Error::Empty("training dataset"))?;
    for s in samples {
        first.target.same_shape(&s.target)?;
    }
    let mut rng = Rng::new(config.seed);
    let mut net = ReconNet::init(config, &mut rng.fork(0))?;
    let mut opt = OptimizerState::new(&net.store, config.adam)?;
    let mut trace = LossTrace::default();
    let total = config.total_steps();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    'epochs: for _ in 0..config.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(config.batch_size) {
            if trace.rows.len() == total {
                break 'epochs;
            }
            let redrawn: Vec<ReconSample>;
            let batch: Vec<&ReconSample> = if config.redraw_masks {
                redrawn = chunk
                    .iter()
                    .map(|&i| {
                        let s = &samples[i];
                        let mask = make_cartesian_mask(s.target.width(), config.acceleration, config.center_fraction, &mut rng)?;
                        ReconSample::new(s.target.clone(), mask)
                    })
                    .collect::<Result<_>>()?;
                redrawn.iter().collect()
            } else {
                chunk.iter().map(|&i| &samples[i]).collect()
            };
            let targets: Vec<ComplexBatch<f32>> = batch
                .iter()
                .map(|s| ComplexBatch::from_channels(&[&s.target]))
                .collect::<Result<_>>()?;
            let target = ComplexBatch::stack(&targets)?;
            let (tape, out, _) = net.record(&batch)?;
            let (loss, grad) = loss_mse_grad(&target, tape.value(out))?;
            let step = trace.rows.len();
            if !loss.is_finite() {
                return Err(Error::Diverged { step, loss });
            }
            let grads = tape.backward(out, grad, &net.store)?.params;
            trace.rows.push(LossRow { step, loss, lr: opt.lr() });
            adam_step(&mut net.store, &grads, &mut opt)?;
        }
        opt.end_epoch();
    }
    Ok((net, trace))
}
