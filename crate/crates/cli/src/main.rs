//! `phasegen` command-line tool.
//!
//! Exit codes: 0 on success, 1 for usage errors (bad flags, unknown settings,
//! invalid values), 2 for runtime failures (I/O, shape mismatches, divergence).

mod commands;
mod inputs;
mod png;
mod settings;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// An error caused by how the tool was invoked.
#[derive(Debug)]
pub struct Usage(String);

impl Usage {
    pub fn new(msg: impl Into<String>) -> Self {
        Usage(msg.into())
    }
}

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser, Debug)]
#[command(name = "phasegen", version, about = "Synthetic MRI phase from magnitude images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by the commands that take `key = value` settings.
#[derive(Args, Debug)]
pub struct Common {
    /// File of `key = value` lines; flags after it take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (runs go in a fresh timestamped subdirectory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Further settings as `--key value` or `--key=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "SETTINGS")]
    pub settings: Vec<String>,
}

impl Common {
    /// Once the first unknown flag starts the trailing settings, clap leaves
    /// any later `--config`, `--seed` or `--out` in there too; pull them back.
    fn normalize(mut self) -> anyhow::Result<Self> {
        let mut rest = Vec::with_capacity(self.settings.len());
        let mut it = std::mem::take(&mut self.settings).into_iter();
        while let Some(flag) = it.next() {
            let (name, inline) = match flag.split_once('=') {
                Some((n, v)) => (n.to_string(), Some(v.to_string())),
                None => (flag.clone(), None),
            };
            if !matches!(name.as_str(), "--config" | "--seed" | "--out") {
                rest.push(flag);
                continue;
            }
            let value = match inline {
                Some(v) => v,
                None => it.next().ok_or_else(|| Usage::new(format!("missing value for `{name}`")))?,
            };
            match name.as_str() {
                "--config" => self.config = Some(value.into()),
                "--out" => self.out = Some(value.into()),
                _ => {
                    let seed = value.parse().map_err(|_| Usage::new(format!("invalid seed `{value}`")))?;
                    self.seed = Some(seed);
                }
            }
        }
        self.settings = rest;
        Ok(self)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a phantom dataset (settings: count, size).
    Phantom(Common),
    /// Train the phase denoiser (training config keys, plus `data`).
    TrainPhasegen(Common),
    /// Sample phases for magnitudes (settings: checkpoint, input).
    Sample(Common),
    /// Naive phase baseline (settings: input, sigma).
    NaivePhase(Common),
    /// Draw Cartesian undersampling masks (settings: width, acceleration, center_fraction, count).
    Mask(Common),
    /// Train and evaluate the reconstruction network, or the zerofill baseline.
    Recon(Common),
    /// Print one CSV row of metrics comparing PRED against REF.
    Metrics(MetricsArgs),
    /// Unwrap a phase map with the Laplacian method.
    Unwrap(UnwrapArgs),
    /// Render a tensor as an 8-bit PNG.
    ExportPng(ExportArgs),
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    pub reference: PathBuf,
    pub pred: PathBuf,
    /// Reference segmentation; enables the dsc and hd columns.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Predicted segmentation (default: the prediction's own brain mask,
    /// else its thresholded magnitude).
    #[arg(long)]
    pub pred_mask: Option<PathBuf>,
    /// Print the column names first.
    #[arg(long)]
    pub header: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum UnwrapKind {
    /// Use the phase of a complex image (or a phantom's phase plane).
    Complex,
    /// Use the real part as the wrapped phase.
    Real,
}

#[derive(Args, Debug)]
pub struct UnwrapArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = UnwrapKind::Complex)]
    pub kind: UnwrapKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PngKind {
    Magnitude,
    Phase,
    Real,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    pub tensor: PathBuf,
    #[arg(long, value_enum)]
    pub kind: PngKind,
    #[arg(long)]
    pub out: PathBuf,
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("PHASEGEN_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Usage::new(format!("PHASEGEN_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    match cli.command {
        Command::Phantom(c) => commands::phantom(c.normalize()?),
        Command::TrainPhasegen(c) => commands::train_phasegen(c.normalize()?),
        Command::Sample(c) => commands::sample(c.normalize()?),
        Command::NaivePhase(c) => commands::naive_phase(c.normalize()?),
        Command::Mask(c) => commands::mask(c.normalize()?),
        Command::Recon(c) => commands::recon(c.normalize()?),
        Command::Metrics(a) => commands::metrics(a),
        Command::Unwrap(a) => commands::unwrap(a),
        Command::ExportPng(a) => commands::export_png(a),
    }
}

/// The error chain joined by `: `, skipping causes a message already quotes.
fn message(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if out.ends_with(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", message(&e));
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
