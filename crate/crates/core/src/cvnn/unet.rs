//! Complex residual U-Net.
//!
//! ```text
//! input (+ time channels) -> stem conv -> PReLU
//! encoder level d: ResBlock(ch_d) -> [stride-2 conv -> PReLU -> dropout]
//! decoder level d: upsample -> conv -> PReLU -> concat skip_d -> ResBlock(2 ch_d -> ch_d)
//! head: 1x1 conv (zero initialized) [+ input channel 0 when residual]
//! ```
//!
//! `ch_d = base_channels * 2^d`. A ResBlock is conv -> PReLU -> dropout ->
//! conv, added to its input (1x1 projection when the widths differ), then PReLU.

use num_complex::Complex;

use super::batch::ComplexBatch;
use super::layers::{self, ConvGeom};
use super::params::{Gradients, ParamId, ParamStore};
use super::tape::{Backward, ConvIds, Tape, Var};
use crate::complex::{is_finite, Real, Rng};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CvUNetConfig {
    /// Data channels (the time channels are added on top).
    pub in_channels: usize,
    pub out_channels: usize,
    /// Number of resolution levels.
    pub depth: usize,
    pub base_channels: usize,
    pub kernel_size: usize,
    pub dropout: f64,
    /// Width of the timestep embedding; 0 disables it.
    pub time_channels: usize,
    /// Diffusion length used to normalize `t`.
    pub timesteps: usize,
    /// Adds input channel 0 to the output.
    pub residual: bool,
}

impl CvUNetConfig {
    /// Denoiser for `(z_t, magnitude)` input.
    pub fn phasegen(depth: usize, base_channels: usize, timesteps: usize) -> Self {
        Self {
            in_channels: 2,
            out_channels: 1,
            depth,
            base_channels,
            kernel_size: 3,
            dropout: 0.0,
            time_channels: 1,
            timesteps,
            residual: false,
        }
    }

    /// Image-to-image refinement with a residual output.
    pub fn recon(depth: usize, base_channels: usize) -> Self {
        Self {
            in_channels: 1,
            out_channels: 1,
            depth,
            base_channels,
            kernel_size: 3,
            dropout: 0.0,
            time_channels: 0,
            timesteps: 1,
            residual: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.depth < 1 {
            return bad("depth must be at least 1".into());
        }
        if self.in_channels == 0 || self.out_channels == 0 || self.base_channels == 0 {
            return bad("channel counts must be positive".into());
        }
        if self.kernel_size % 2 == 0 {
            return bad(format!("kernel size must be odd, got {}", self.kernel_size));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.time_channels > 0 && self.timesteps == 0 {
            return bad("timesteps must be positive".into());
        }
        if self.residual && self.out_channels != 1 {
            return bad("residual output needs exactly one output channel".into());
        }
        Ok(())
    }

    fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Spatial sizes must halve cleanly `depth - 1` times.
    pub fn check_size(&self, h: usize, w: usize) -> Result<()> {
        let f = 1 << (self.depth - 1);
        if h % f != 0 || w % f != 0 {
            return Err(Error::InvalidArgument(format!(
                "{h}x{w} input is not divisible by {f} for depth {}",
                self.depth
            )));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        [
            ("in_channels", self.in_channels.to_string()),
            ("out_channels", self.out_channels.to_string()),
            ("depth", self.depth.to_string()),
            ("base_channels", self.base_channels.to_string()),
            ("kernel_size", self.kernel_size.to_string()),
            ("dropout", self.dropout.to_string()),
            ("time_channels", self.time_channels.to_string()),
            ("timesteps", self.timesteps.to_string()),
            ("residual", self.residual.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        fn get<V: std::str::FromStr>(pairs: &[(String, String)], key: &str) -> Result<V> {
            let raw = pairs
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v)
                .ok_or_else(|| Error::InvalidArgument(format!("model config is missing `{key}`")))?;
            raw.parse()
                .map_err(|_| Error::InvalidArgument(format!("bad value for `{key}`: {raw}")))
        }
        let cfg = Self {
            in_channels: get(pairs, "in_channels")?,
            out_channels: get(pairs, "out_channels")?,
            depth: get(pairs, "depth")?,
            base_channels: get(pairs, "base_channels")?,
            kernel_size: get(pairs, "kernel_size")?,
            dropout: get(pairs, "dropout")?,
            time_channels: get(pairs, "time_channels")?,
            timesteps: get(pairs, "timesteps")?,
            residual: get(pairs, "residual")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug)]
struct ResBlock {
    conv1: ConvIds,
    act1: ParamId,
    conv2: ConvIds,
    proj: Option<ConvIds>,
    act_out: ParamId,
}

#[derive(Clone, Debug)]
struct Down {
    conv: ConvIds,
    act: ParamId,
}

#[derive(Clone, Debug)]
struct Up {
    conv: ConvIds,
    act: ParamId,
    block: ResBlock,
}

/// Parameter handles of one U-Net inside a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct UNetLayout {
    config: CvUNetConfig,
    stem: ConvIds,
    stem_act: ParamId,
    enc: Vec<ResBlock>,
    down: Vec<Down>,
    up: Vec<Up>,
    head: ConvIds,
}

pub(crate) const SLOPE_INIT: f64 = 0.25;

fn conv_ids<T: Real>(
    store: &mut ParamStore<T>,
    name: &str,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    rng: &mut Rng,
) -> ConvIds {
    let weight = store.add_kernel(&format!("{name}.weight"), out_ch, in_ch, kernel, rng);
    let bias = store.add_zeros(&format!("{name}.bias"), vec![out_ch], super::params::ParamKind::Complex);
    ConvIds {
        weight,
        bias,
        geom: ConvGeom {
            in_ch,
            out_ch,
            kernel,
            stride,
        },
    }
}

fn res_block<T: Real>(store: &mut ParamStore<T>, name: &str, in_ch: usize, ch: usize, k: usize, rng: &mut Rng) -> ResBlock {
    ResBlock {
        conv1: conv_ids(store, &format!("{name}.conv1"), in_ch, ch, k, 1, rng),
        act1: store.add_real_filled(&format!("{name}.act1"), ch, SLOPE_INIT),
        conv2: conv_ids(store, &format!("{name}.conv2"), ch, ch, k, 1, rng),
        proj: (in_ch != ch).then(|| conv_ids(store, &format!("{name}.proj"), in_ch, ch, 1, 1, rng)),
        act_out: store.add_real_filled(&format!("{name}.act_out"), ch, SLOPE_INIT),
    }
}

/// Forward-pass mode. Dropout is active only in training.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut Rng),
}

impl UNetLayout {
    /// Adds a freshly initialized U-Net to `store` with names under `prefix`.
    pub fn init<T: Real>(config: &CvUNetConfig, store: &mut ParamStore<T>, prefix: &str, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let k = config.kernel_size;
        let p = |s: &str| format!("{prefix}{s}");
        let input = config.in_channels + config.time_channels;
        let c0 = config.channels(0);
        let stem = conv_ids(store, &p("stem"), input, c0, k, 1, rng);
        let stem_act = store.add_real_filled(&p("stem.act"), c0, SLOPE_INIT);
        let mut enc = Vec::new();
        let mut down = Vec::new();
        for d in 0..config.depth {
            let ch = config.channels(d);
            enc.push(res_block(store, &p(&format!("enc{d}")), ch, ch, k, rng));
            if d + 1 < config.depth {
                let next = config.channels(d + 1);
                down.push(Down {
                    conv: conv_ids(store, &p(&format!("down{d}")), ch, next, k, 2, rng),
                    act: store.add_real_filled(&p(&format!("down{d}.act")), next, SLOPE_INIT),
                });
            }
        }
        let mut up = Vec::new();
        for d in (0..config.depth - 1).rev() {
            let ch = config.channels(d);
            up.push(Up {
                conv: conv_ids(store, &p(&format!("up{d}")), config.channels(d + 1), ch, k, 1, rng),
                act: store.add_real_filled(&p(&format!("up{d}.act")), ch, SLOPE_INIT),
                block: res_block(store, &p(&format!("dec{d}")), 2 * ch, ch, k, rng),
            });
        }
        let head = ConvIds {
            weight: store.add_zeros(&p("head.weight"), vec![config.out_channels, c0, 1, 1], super::params::ParamKind::Complex),
            bias: store.add_zeros(&p("head.bias"), vec![config.out_channels], super::params::ParamKind::Complex),
            geom: ConvGeom {
                in_ch: c0,
                out_ch: config.out_channels,
                kernel: 1,
                stride: 1,
            },
        };
        Ok(Self {
            config: config.clone(),
            stem,
            stem_act,
            enc,
            down,
            up,
            head,
        })
    }

    pub fn config(&self) -> &CvUNetConfig {
        &self.config
    }

    fn dropout<T: Real>(&self, tape: &mut Tape<T>, x: Var, mode: &mut Mode) -> Result<Var> {
        match mode {
            Mode::Train(rng) if self.config.dropout > 0.0 => {
                let scales = layers::dropout_scales(tape.value(x).len(), self.config.dropout, rng);
                tape.scale(x, scales)
            }
            _ => Ok(x),
        }
    }

    fn block<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, b: &ResBlock, x: Var, mode: &mut Mode) -> Result<Var> {
        let h = tape.conv(store, x, b.conv1)?;
        let h = tape.prelu(store, h, b.act1)?;
        let h = self.dropout(tape, h, mode)?;
        let h = tape.conv(store, h, b.conv2)?;
        let skip = match b.proj {
            Some(p) => tape.conv(store, x, p)?,
            None => x,
        };
        let s = tape.add(h, skip)?;
        tape.prelu(store, s, b.act_out)
    }

    /// Constant time channels for each sample: `t/T`, then `cos(j pi t/T)`.
    fn time_batch<T: Real>(&self, x: &ComplexBatch<T>, t_index: &[usize]) -> Result<Option<ComplexBatch<T>>> {
        let cfg = &self.config;
        let [n, c, h, w] = x.shape();
        if c != cfg.in_channels {
            return Err(Error::shape(format!("{} input channels", cfg.in_channels), c));
        }
        cfg.check_size(h, w)?;
        if cfg.time_channels == 0 {
            return Ok(None);
        }
        if t_index.len() != n {
            return Err(Error::shape(format!("{n} timesteps"), t_index.len()));
        }
        let hw = h * w;
        let mut data = Vec::with_capacity(n * cfg.time_channels * hw);
        for &t in t_index {
            if t < 1 || t > cfg.timesteps {
                return Err(Error::TimestepOutOfRange { t, t_max: cfg.timesteps });
            }
            let frac = t as f64 / cfg.timesteps as f64;
            for j in 0..cfg.time_channels {
                let v = if j == 0 { frac } else { (j as f64 * std::f64::consts::PI * frac).cos() };
                data.extend(std::iter::repeat(Complex::new(T::of(v), T::zero())).take(hw));
            }
        }
        Ok(Some(ComplexBatch::from_parts([n, cfg.time_channels, h, w], data)))
    }

    /// Records the network on `tape`. `x` holds the data channels; the time
    /// channels are built from `t_index` and appended here.
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        t_index: &[usize],
        mode: &mut Mode,
    ) -> Result<Var> {
        let inp = match self.time_batch(tape.value(x), t_index)? {
            Some(time) => {
                let tv = tape.input(time);
                tape.concat(x, tv)?
            }
            None => x,
        };
        let mut h = tape.conv(store, inp, self.stem)?;
        h = tape.prelu(store, h, self.stem_act)?;
        let mut skips = Vec::new();
        for d in 0..self.config.depth {
            h = self.block(tape, store, &self.enc[d], h, mode)?;
            if let Some(down) = self.down.get(d) {
                skips.push(h);
                h = tape.conv(store, h, down.conv)?;
                h = tape.prelu(store, h, down.act)?;
                h = self.dropout(tape, h, mode)?;
            }
        }
        for up in &self.up {
            let skip = skips.pop().expect("one skip per decoder level");
            h = tape.upsample2(h);
            h = tape.conv(store, h, up.conv)?;
            h = tape.prelu(store, h, up.act)?;
            h = tape.concat(h, skip)?;
            h = self.block(tape, store, &up.block, h, mode)?;
        }
        let mut out = tape.conv(store, h, self.head)?;
        if self.config.residual {
            let first = if self.config.in_channels == 1 {
                x
            } else {
                let (a, _) = layers::split_channels(tape.value(x), 1);
                tape.input(a)
            };
            out = tape.add(out, first)?;
        }
        Ok(out)
    }
}

/// A U-Net together with its own parameters.
#[derive(Clone, Debug)]
pub struct CvUNetParams<T = f32> {
    pub layout: UNetLayout,
    pub store: ParamStore<T>,
}

impl<T: Real> CvUNetParams<T> {
    pub fn init(config: &CvUNetConfig, rng: &mut Rng) -> Result<Self> {
        let mut store = ParamStore::new();
        let layout = UNetLayout::init(config, &mut store, "", rng)?;
        Ok(Self { layout, store })
    }

    pub fn config(&self) -> &CvUNetConfig {
        self.layout.config()
    }

    /// Trainable real components.
    pub fn parameter_count(&self) -> usize {
        self.store.parameter_count()
    }

    pub fn is_finite(&self) -> bool {
        self.store.iter().all(|(_, p)| p.values.iter().all(is_finite))
    }
}

/// Output of [`unet_forward`] plus the activations needed by [`unet_backward`].
pub struct ForwardRecord<T> {
    pub output: ComplexBatch<T>,
    tape: Tape<T>,
    out: Var,
}

impl<T: Real> ForwardRecord<T> {
    pub fn tape(&self) -> &Tape<T> {
        &self.tape
    }
}

/// Predicts one output channel per sample; `t_index[n]` is in `1..=T`.
pub fn unet_forward<T: Real>(x: &ComplexBatch<T>, t_index: &[usize], net: &CvUNetParams<T>, mut mode: Mode) -> Result<ForwardRecord<T>> {
    let mut tape = Tape::new(&net.store);
    let xv = tape.input(x.clone());
    let out = net.layout.forward(&mut tape, &net.store, xv, t_index, &mut mode)?;
    Ok(ForwardRecord {
        output: tape.value(out).clone(),
        tape,
        out,
    })
}

/// Parameter gradients of a real loss given `dL/d output`.
pub fn unet_backward<T: Real>(loss_grad: &ComplexBatch<T>, record: &ForwardRecord<T>, net: &CvUNetParams<T>) -> Result<Gradients<T>> {
    Ok(unet_backward_full(loss_grad, record, net)?.params)
}

pub(crate) fn unet_backward_full<T: Real>(loss_grad: &ComplexBatch<T>, record: &ForwardRecord<T>, net: &CvUNetParams<T>) -> Result<Backward<T>> {
    record.tape.backward(record.out, loss_grad.clone(), &net.store)
}
