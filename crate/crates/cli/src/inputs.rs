//! Reading tensors and datasets, and allocating output locations.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use num_complex::Complex32;
use phasegen::pipelines::{Manifest, PhantomRecord, MANIFEST_FILE};
use phasegen::tensor_io::{self, Tensor};
use phasegen::{ComplexImage, Grid};

/// A record read from disk. `true_phase` is present for phantoms and complex
/// images, `mask` only for phantoms with a brain mask.
pub struct Record {
    pub id: String,
    pub magnitude: Grid<f32>,
    pub true_phase: Option<Grid<f32>>,
    pub complex: ComplexImage<f32>,
    pub mask: Option<Grid<bool>>,
}

impl Record {
    fn from_phantom(id: String, p: PhantomRecord) -> Self {
        let complex = p.complex();
        Self {
            id,
            magnitude: p.magnitude,
            true_phase: Some(p.true_phase),
            complex,
            mask: p.brain_mask,
        }
    }

    fn from_image(id: String, z: ComplexImage<f32>) -> Self {
        Self {
            id,
            magnitude: z.magnitude(),
            true_phase: Some(z.phase()),
            complex: z,
            mask: None,
        }
    }
}

/// What a CXT1 file holds, told apart by rank.
pub enum Contents {
    /// `[3, h, w]`.
    Phantom(PhantomRecord),
    /// `[h, w]`.
    Image(ComplexImage<f32>),
}

pub fn read_contents(path: &Path) -> Result<Contents> {
    let t = tensor_io::read_raw(path)?;
    match t.rank() {
        3 => Ok(Contents::Phantom(
            PhantomRecord::from_tensor(&t).with_context(|| format!("{} is not a phantom record", path.display()))?,
        )),
        2 => Ok(Contents::Image(
            tensor_io::tensor_to_image(t).with_context(|| format!("reading {}", path.display()))?,
        )),
        r => bail!("{}: expected a rank-2 image or a rank-3 phantom, found rank {r}", path.display()),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "input".into())
}

/// A single CXT1 file, or a dataset directory with a manifest.
pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    if path.is_dir() {
        let manifest = Manifest::read(path.join(MANIFEST_FILE))?;
        return manifest
            .entries
            .iter()
            .map(|e| {
                let file = path.join(&e.path);
                Ok(match read_contents(&file)? {
                    Contents::Phantom(p) => Record::from_phantom(e.id.clone(), p),
                    Contents::Image(z) => Record::from_image(e.id.clone(), z),
                })
            })
            .collect();
    }
    Ok(vec![match read_contents(path)? {
        Contents::Phantom(p) => Record::from_phantom(stem(path), p),
        Contents::Image(z) => Record::from_image(stem(path), z),
    }])
}

/// Boolean mask from a phantom (its brain mask) or a real-valued image
/// (`re > 0.5`).
pub fn read_bool_mask(path: &Path) -> Result<Grid<bool>> {
    match read_contents(path)? {
        Contents::Phantom(p) => p.brain_mask.with_context(|| format!("{} has no brain mask", path.display())),
        Contents::Image(z) => Ok(Grid::new(z.height(), z.width(), z.data().iter().map(|v| v.re > 0.5).collect())?),
    }
}

pub fn real_tensor(grid: &Grid<f64>) -> Tensor {
    let (h, w) = grid.shape();
    Tensor {
        dims: vec![h, w],
        data: grid.data().iter().map(|&v| Complex32::new(v as f32, 0.0)).collect(),
    }
}

/// Fails if `path` exists: outputs are never overwritten.
pub fn fresh_file(path: &Path) -> Result<()> {
    if path.exists() {
        bail!("refusing to overwrite existing {}", path.display());
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

/// New directory `<base>/<YYYYmmdd-HHMMSS>-seed<seed>`, suffixed `-2`, `-3`
/// ... if that name is taken.
pub fn new_run_dir(base: &Path, seed: u64) -> Result<PathBuf> {
    std::fs::create_dir_all(base).with_context(|| format!("creating {}", base.display()))?;
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    let name = format!("{stamp}-seed{seed}");
    for k in 1.. {
        let dir = if k == 1 { base.join(&name) } else { base.join(format!("{name}-{k}")) };
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e).with_context(|| format!("creating {}", dir.display())),
        }
    }
    unreachable!()
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fresh_file(path)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_pairs(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    let text: String = pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    write_text(path, &text)
}
