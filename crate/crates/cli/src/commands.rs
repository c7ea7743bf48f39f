use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use phasegen::kspace::{make_cartesian_mask, write_mask};
use phasegen::metrics::{
    circular_rmse, laplacian_unwrap, BinaryMask, MetricReport, FOREGROUND_THRESHOLD, REPORT_HEADER,
};
use phasegen::pipelines::{
    generate_phantom, load_phasegen, prepare_recon_samples, sample_phase, save_phasegen, train_phasegen_with,
    train_recon, write_phantom_dataset, LossRow, ReconConfig, ReconNet, ReconSample, TrainConfig, MANIFEST_FILE,
    MIN_PHANTOM_SIZE,
};
use phasegen::tensor_io;
use phasegen::{ComplexImage, Grid, PolarImage, Rng};

use crate::inputs::{fresh_file, new_run_dir, read_bool_mask, read_contents, read_records, real_tensor, write_pairs, write_text, Contents, Record};
use crate::png;
use crate::settings::Settings;
use crate::{Common, ExportArgs, MetricsArgs, PngKind, UnwrapArgs, UnwrapKind, Usage};

const DEFAULT_RUNS: &str = "runs";

/// Invalid settings reported by the library are usage errors.
fn config_err(e: phasegen::Error) -> anyhow::Error {
    match e {
        phasegen::Error::InvalidArgument(msg) => Usage::new(msg).into(),
        other => other.into(),
    }
}

fn settings(c: &Common) -> Result<Settings> {
    Settings::load(c.config.as_deref(), &c.settings, c.seed)
}

fn required(s: &mut Settings, key: &str) -> Result<PathBuf> {
    s.take(key)
        .map(PathBuf::from)
        .ok_or_else(|| Usage::new(format!("missing required setting `{key}`")).into())
}

fn run_dir(c: &Common, seed: u64) -> Result<PathBuf> {
    let dir = new_run_dir(c.out.as_deref().unwrap_or(Path::new(DEFAULT_RUNS)), seed)?;
    println!("{}", dir.display());
    Ok(dir)
}

fn phantom_images(seeds: impl Iterator<Item = u64>, size: usize) -> Result<Vec<ComplexImage<f32>>> {
    let seeds: Vec<u64> = seeds.collect();
    seeds
        .par_iter()
        .map(|&s| Ok(generate_phantom(s, size).map_err(config_err)?.complex()))
        .collect()
}

/// Generated phantoms have a minimum size; checked before any output exists.
fn check_phantom_size(data: Option<&PathBuf>, size: usize) -> Result<()> {
    if data.is_none() && size < MIN_PHANTOM_SIZE {
        return Err(Usage::new(format!("image_size must be >= {MIN_PHANTOM_SIZE} for generated phantoms")).into());
    }
    Ok(())
}

fn record_images(dir: &Path, size: usize) -> Result<Vec<ComplexImage<f32>>> {
    let images: Vec<_> = read_records(dir)?.into_iter().map(|r| r.complex).collect();
    if let Some(z) = images.iter().find(|z| z.shape() != (size, size)) {
        bail!("{}: image is {:?}, expected {size}x{size}", dir.display(), z.shape());
    }
    Ok(images)
}

fn progress_printer(total: usize) -> impl FnMut(&LossRow) {
    let every = (total / 20).max(1);
    move |row: &LossRow| {
        if row.step % every == 0 || row.step + 1 == total {
            eprintln!("step {}/{total} loss {:.5} lr {:.3e}", row.step + 1, row.loss, row.lr);
        }
    }
}

pub fn phantom(c: Common) -> Result<()> {
    let mut s = settings(&c)?;
    s.check_keys(&["count", "size", "seed"])?;
    let count: usize = s.take_parsed("count", 100)?;
    let size: usize = s.take_parsed("size", 32)?;
    let seed: u64 = s.take_parsed("seed", 0)?;
    let dir = match &c.out {
        Some(dir) => dir.clone(),
        None => run_dir(&c, seed)?,
    };
    let mut targets = vec![dir.join(MANIFEST_FILE)];
    targets.extend((0..count).map(|i| dir.join(format!("phantom_{i:05}.cxt"))));
    for t in &targets {
        fresh_file(t)?;
    }
    let manifest = write_phantom_dataset(&dir, seed, count, size).map_err(config_err)?;
    eprintln!("wrote {} phantoms of size {size} to {}", manifest.len(), dir.display());
    Ok(())
}

pub fn train_phasegen(c: Common) -> Result<()> {
    let mut s = settings(&c)?;
    let data = s.take("data").map(PathBuf::from);
    let cfg = TrainConfig::from_pairs(s.pairs()).map_err(config_err)?;
    check_phantom_size(data.as_ref(), cfg.image_size)?;
    let dir = run_dir(&c, cfg.seed)?;
    let mut pairs = cfg.to_pairs();
    if let Some(d) = &data {
        pairs.push(("data".into(), d.display().to_string()));
    }
    write_pairs(&dir.join("config.txt"), &pairs)?;

    let images = match &data {
        Some(d) => record_images(d, cfg.image_size)?,
        None => phantom_images(0..cfg.dataset_size as u64, cfg.image_size)?,
    };
    eprintln!("training on {} images for {} steps", images.len(), cfg.total_steps());
    let (net, trace) = train_phasegen_with(&images, &cfg, progress_printer(cfg.total_steps()))?;
    trace.write_csv(dir.join("loss.csv"))?;
    save_phasegen(dir.join("checkpoint"), &net, &cfg)?;
    Ok(())
}

/// Foreground used for phase errors: the phantom brain mask when there is
/// one, else thresholded magnitude.
fn foreground(r: &Record) -> BinaryMask {
    match &r.mask {
        Some(m) => BinaryMask::new(m.clone()),
        None => BinaryMask::threshold(&r.magnitude, FOREGROUND_THRESHOLD),
    }
}

/// Writes `<id>.cxt` per output plus `metrics.csv` with the circular phase
/// error against the input's phase.
fn write_phase_outputs(dir: &Path, records: &[Record], outputs: &[PolarImage<f32>]) -> Result<()> {
    let mut csv = String::from("id,circ_rmse\n");
    for (r, p) in records.iter().zip(outputs) {
        let z = phasegen::from_polar(p)?;
        let path = dir.join(format!("{}.cxt", r.id));
        fresh_file(&path)?;
        tensor_io::write_tensor(&path, &z)?;
        let err = match &r.true_phase {
            Some(truth) => circular_rmse(truth, p.phase(), &foreground(r))?.to_string(),
            None => String::new(),
        };
        writeln!(csv, "{},{err}", r.id)?;
    }
    write_text(&dir.join("metrics.csv"), &csv)
}

pub fn sample(c: Common) -> Result<()> {
    let mut s = settings(&c)?;
    s.check_keys(&["checkpoint", "input", "seed"])?;
    let checkpoint = required(&mut s, "checkpoint")?;
    let input = required(&mut s, "input")?;
    let seed: u64 = s.take_parsed("seed", 0)?;
    let (net, cfg) = load_phasegen(&checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let records = read_records(&input)?;
    let dir = run_dir(&c, seed)?;
    write_pairs(
        &dir.join("config.txt"),
        &[
            ("checkpoint".into(), checkpoint.display().to_string()),
            ("input".into(), input.display().to_string()),
            ("seed".into(), seed.to_string()),
        ],
    )?;
    let base = Rng::new(seed);
    let outputs: Vec<PolarImage<f32>> = records
        .par_iter()
        .enumerate()
        .map(|(i, r)| sample_phase(&r.magnitude, &net, &cfg.diffusion, &mut base.fork(i as u64)))
        .collect::<phasegen::Result<_>>()?;
    write_phase_outputs(&dir, &records, &outputs)
}

pub fn naive_phase(c: Common) -> Result<()> {
    let mut s = settings(&c)?;
    s.check_keys(&["input", "sigma", "seed"])?;
    let input = required(&mut s, "input")?;
    let sigma: f64 = s.take_parsed("sigma", 0.05)?;
    let seed: u64 = s.take_parsed("seed", 0)?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Usage::new(format!("sigma must be finite and >= 0, got {sigma}")).into());
    }
    let records = read_records(&input)?;
    let dir = run_dir(&c, seed)?;
    write_pairs(
        &dir.join("config.txt"),
        &[
            ("input".into(), input.display().to_string()),
            ("sigma".into(), sigma.to_string()),
            ("seed".into(), seed.to_string()),
        ],
    )?;
    let base = Rng::new(seed);
    let outputs: Vec<PolarImage<f32>> = records
        .iter()
        .enumerate()
        .map(|(i, r)| phasegen::pipelines::naive_phase(&r.magnitude, sigma, &mut base.fork(i as u64)))
        .collect::<phasegen::Result<_>>()?;
    write_phase_outputs(&dir, &records, &outputs)
}

pub fn mask(c: Common) -> Result<()> {
    let mut s = settings(&c)?;
    s.check_keys(&["width", "acceleration", "center_fraction", "count", "seed"])?;
    let width: usize = s.take_parsed("width", 32)?;
    let acceleration: f64 = s.take_parsed("acceleration", 4.0)?;
    let center_fraction: f64 = s.take_parsed("center_fraction", 0.08)?;
    let count: usize = s.take_parsed("count", 1)?;
    let seed: u64 = s.take_parsed("seed", 0)?;
    let masks = (0..count)
        .map(|i| make_cartesian_mask(width, acceleration, center_fraction, &mut Rng::new(seed).fork(i as u64)))
        .collect::<phasegen::Result<Vec<_>>>()
        .map_err(config_err)?;
    let dir = run_dir(&c, seed)?;
    write_pairs(
        &dir.join("config.txt"),
        &[
            ("width".into(), width.to_string()),
            ("acceleration".into(), acceleration.to_string()),
            ("center_fraction".into(), center_fraction.to_string()),
            ("count".into(), count.to_string()),
            ("seed".into(), seed.to_string()),
        ],
    )?;
    for (i, m) in masks.iter().enumerate() {
        let path = dir.join(format!("mask_{i:03}.cxt"));
        fresh_file(&path)?;
        write_mask(&path, m)?;
        eprintln!("mask {i}: {} of {width} columns kept", m.kept_count());
    }
    Ok(())
}

/// Quality metrics on magnitudes, segmentation on thresholded magnitudes and
/// the phase error over the reference foreground.
fn recon_report(target: &ComplexImage<f32>, pred: &ComplexImage<f32>) -> Result<MetricReport> {
    let (ref_mag, pred_mag) = (target.magnitude(), pred.magnitude());
    let ref_fg = BinaryMask::threshold(&ref_mag, FOREGROUND_THRESHOLD);
    let mut report = MetricReport::image_quality(&ref_mag, &pred_mag)?
        .with_segmentation(&ref_fg, &BinaryMask::threshold(&pred_mag, FOREGROUND_THRESHOLD))?;
    report.circ_rmse = Some(circular_rmse(&target.phase(), &pred.phase(), &ref_fg)?);
    Ok(report)
}

pub fn recon(c: Common) -> Result<()> {
    let mut s = settings(&c)?;
    let data = s.take("data").map(PathBuf::from);
    let test_data = s.take("test_data").map(PathBuf::from);
    let test_count: usize = s.take_parsed("test_count", 10)?;
    let test_seed: u64 = s.take_parsed("test_seed", 2_000_000)?;
    let mask_seed: u64 = s.take_parsed("mask_seed", 1)?;
    let baseline = s.take("baseline").unwrap_or_else(|| "none".into());
    let zerofill_only = match baseline.as_str() {
        "none" => false,
        "zerofill" => true,
        other => return Err(Usage::new(format!("baseline must be `none` or `zerofill`, got `{other}`")).into()),
    };
    let cfg = ReconConfig::from_pairs(s.pairs()).map_err(config_err)?;
    check_phantom_size(data.as_ref(), cfg.image_size)?;
    check_phantom_size(test_data.as_ref(), cfg.image_size)?;
    let dir = run_dir(&c, cfg.seed)?;
    let mut pairs = cfg.to_pairs();
    for (k, v) in [
        ("data", data.as_ref().map(|p| p.display().to_string())),
        ("test_data", test_data.as_ref().map(|p| p.display().to_string())),
        ("test_count", Some(test_count.to_string())),
        ("test_seed", Some(test_seed.to_string())),
        ("mask_seed", Some(mask_seed.to_string())),
        ("baseline", Some(baseline.clone())),
    ] {
        if let Some(v) = v {
            pairs.push((k.into(), v));
        }
    }
    write_pairs(&dir.join("config.txt"), &pairs)?;

    let (test_ids, test_images): (Vec<String>, Vec<ComplexImage<f32>>) = match &test_data {
        Some(d) => {
            let recs = read_records(d)?;
            recs.into_iter().map(|r| (r.id, r.complex)).unzip()
        }
        None => {
            let seeds = test_seed..test_seed + test_count as u64;
            let ids = seeds.clone().map(|s| format!("phantom_seed{s}")).collect();
            (ids, phantom_images(seeds, cfg.image_size)?)
        }
    };
    let test = prepare_recon_samples(&test_images, cfg.acceleration, cfg.center_fraction, mask_seed.wrapping_add(1))
        .map_err(config_err)?;

    let net: Option<ReconNet> = if zerofill_only {
        None
    } else {
        let images = match &data {
            Some(d) => record_images(d, cfg.image_size)?,
            None => phantom_images(0..cfg.dataset_size as u64, cfg.image_size)?,
        };
        let train = prepare_recon_samples(&images, cfg.acceleration, cfg.center_fraction, mask_seed).map_err(config_err)?;
        eprintln!("training on {} images for {} steps", train.len(), cfg.total_steps());
        let (net, trace) = train_recon(&train, &cfg)?;
        trace.write_csv(dir.join("loss.csv"))?;
        net.save(dir.join("checkpoint"))?;
        Some(net)
    };

    let mut csv = format!("id,method,{REPORT_HEADER}\n");
    for (id, sample) in test_ids.iter().zip(&test) {
        if let Some(net) = &net {
            let out = net.reconstruct(&sample.acquired, &sample.mask)?;
            writeln!(csv, "{id},network,{}", recon_report(&sample.target, &out.image)?.csv_row())?;
        }
        writeln!(csv, "{id},zerofill,{}", recon_report(&sample.target, &ReconSample::zerofilled(sample))?.csv_row())?;
    }
    write_text(&dir.join("metrics.csv"), &csv)
}

/// Magnitude, phase and optional mask of a file.
fn polar_parts(path: &Path) -> Result<(Grid<f32>, Grid<f32>, Option<Grid<bool>>)> {
    Ok(match read_contents(path)? {
        Contents::Phantom(p) => (p.magnitude, p.true_phase, p.brain_mask),
        Contents::Image(z) => (z.magnitude(), z.phase(), None),
    })
}

pub fn metrics(a: MetricsArgs) -> Result<()> {
    let (ref_mag, ref_phase, ref_brain) = polar_parts(&a.reference)?;
    let (pred_mag, pred_phase, pred_brain) = polar_parts(&a.pred)?;
    let mut report = MetricReport::image_quality(&ref_mag, &pred_mag)?;
    let ref_seg = a.mask.as_deref().map(read_bool_mask).transpose()?.map(BinaryMask::new);
    if let Some(ref_seg) = &ref_seg {
        let pred_seg = match (&a.pred_mask, pred_brain) {
            (Some(p), _) => BinaryMask::new(read_bool_mask(p)?),
            (None, Some(b)) => BinaryMask::new(b),
            (None, None) => BinaryMask::threshold(&pred_mag, FOREGROUND_THRESHOLD),
        };
        report = report.with_segmentation(ref_seg, &pred_seg)?;
    } else if a.pred_mask.is_some() {
        return Err(Usage::new("--pred-mask needs --mask").into());
    }
    let fg = match (ref_seg, ref_brain) {
        (Some(m), _) => m,
        (None, Some(b)) => BinaryMask::new(b),
        (None, None) => BinaryMask::threshold(&ref_mag, FOREGROUND_THRESHOLD),
    };
    report.circ_rmse = Some(circular_rmse(&ref_phase, &pred_phase, &fg)?);
    if a.header {
        println!("{REPORT_HEADER}");
    }
    println!("{}", report.csv_row());
    Ok(())
}

pub fn unwrap(a: UnwrapArgs) -> Result<()> {
    let wrapped: Grid<f32> = match (read_contents(&a.input)?, a.kind) {
        (Contents::Phantom(p), UnwrapKind::Complex) => p.true_phase,
        (Contents::Image(z), UnwrapKind::Complex) => z.phase(),
        (Contents::Image(z), UnwrapKind::Real) => Grid::from_fn(z.height(), z.width(), |r, c| z.get(r, c).re),
        (Contents::Phantom(_), UnwrapKind::Real) => return Err(Usage::new("--kind real needs a rank-2 tensor").into()),
    };
    let unwrapped = laplacian_unwrap(&wrapped)?;
    fresh_file(&a.out)?;
    tensor_io::write_raw(&a.out, &real_tensor(&unwrapped))?;
    Ok(())
}

pub fn export_png(a: ExportArgs) -> Result<()> {
    let (mag, phase, real): (Grid<f64>, Grid<f64>, Grid<f64>) = match read_contents(&a.tensor)? {
        Contents::Phantom(p) => {
            let mag = p.magnitude.map(|&v| v as f64);
            (mag.clone(), p.true_phase.map(|&v| v as f64), mag)
        }
        Contents::Image(z) => (
            z.magnitude().map(|&v| v as f64),
            z.phase().map(|&v| v as f64),
            Grid::from_fn(z.height(), z.width(), |r, c| z.get(r, c).re as f64),
        ),
    };
    fresh_file(&a.out)?;
    match a.kind {
        PngKind::Magnitude => png::save_gray(&png::grayscale(&mag), &a.out),
        PngKind::Real => png::save_gray(&png::grayscale(&real), &a.out),
        PngKind::Phase => png::save_rgb(&png::phase_map(&phase), &a.out),
    }
}
