//! Parameter checkpoints.
//!
//! A checkpoint directory holds `manifest.txt` (`name<TAB>shape<TAB>file`
//! per tensor, shape as `2x3x3x3`), one CXT1 file per tensor and `model.cfg`
//! with `key = value` lines describing the architecture.

use std::fs;
use std::path::Path;

use num_complex::Complex32;

use super::params::ParamStore;
use crate::complex::Real;
use crate::error::{Error, Result};
use crate::tensor_io::{self, Tensor};

pub const MANIFEST: &str = "manifest.txt";
pub const MODEL_CFG: &str = "model.cfg";

fn file_name(index: usize, name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '_' { c } else { '_' })
        .collect();
    format!("{index:03}_{clean}.cxt")
}

/// Writes every tensor in `store` (as f32) plus the manifest and config.
pub fn save_checkpoint<T: Real>(dir: impl AsRef<Path>, store: &ParamStore<T>, model_cfg: &[(String, String)]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    for (id, p) in store.iter() {
        let file = file_name(id.index(), &p.name);
        let data = p
            .values
            .iter()
            .map(|z| Complex32::new(z.re.to_f32().unwrap_or(f32::NAN), z.im.to_f32().unwrap_or(f32::NAN)))
            .collect();
        tensor_io::write_raw(dir.join(&file), &Tensor::new(p.shape.clone(), data)?)?;
        let shape: Vec<String> = p.shape.iter().map(usize::to_string).collect();
        manifest.push_str(&format!("{}\t{}\t{}\n", p.name, shape.join("x"), file));
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    write_pairs(&dir.join(MODEL_CFG), model_cfg)
}

/// Overwrites the values of `store` from a checkpoint written for the same
/// layout. Names and shapes must match the manifest line by line.
pub fn load_checkpoint<T: Real>(dir: impl AsRef<Path>, store: &mut ParamStore<T>) -> Result<()> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() != store.len() {
        return Err(Error::shape(format!("{} manifest entries", store.len()), lines.len()));
    }
    let ids: Vec<_> = store.iter().map(|(id, p)| (id, p.name.clone(), p.shape.clone())).collect();
    for (line_no, (line, (id, name, shape))) in lines.iter().zip(ids).enumerate() {
        let parse_err = |message: String| Error::Parse {
            path: path.display().to_string(),
            line: line_no + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let [entry_name, entry_shape, file] = fields[..] else {
            return Err(parse_err(format!("expected 3 tab-separated fields, got {}", fields.len())));
        };
        let dims: Vec<usize> = entry_shape
            .split('x')
            .map(|d| d.parse().map_err(|_| parse_err(format!("bad shape `{entry_shape}`"))))
            .collect::<Result<_>>()?;
        if entry_name != name || dims != shape {
            return Err(parse_err(format!("expected `{name}` with shape {shape:?}, found `{entry_name}` {dims:?}")));
        }
        let t = tensor_io::read_raw(dir.join(file))?;
        if t.dims != shape {
            return Err(Error::shape(format!("{shape:?} in {file}"), format!("{:?}", t.dims)));
        }
        if let Some(index) = t.data.iter().position(|z| !z.is_finite()) {
            return Err(Error::NonFinite { what: "checkpoint tensor", index });
        }
        for (dst, src) in store.values_mut(id).iter_mut().zip(&t.data) {
            dst.re = T::of(src.re as f64);
            dst.im = T::of(src.im as f64);
        }
    }
    Ok(())
}

pub fn read_model_cfg(dir: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    read_pairs(&dir.as_ref().join(MODEL_CFG))
}

pub(crate) fn write_pairs(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    let text: String = pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text).map_err(|(line, message)| Error::Parse {
        path: path.display().to_string(),
        line,
        message,
    })
}

/// Line-numbered errors are 1-based.
pub fn parse_pairs(text: &str) -> std::result::Result<Vec<(String, String)>, (usize, String)> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err((i + 1, format!("expected `key = value`, got `{line}`")));
        };
        let k = k.trim();
        if k.is_empty() {
            return Err((i + 1, "empty key".into()));
        }
        if out.iter().any(|(seen, _): &(String, String)| seen == k) {
            return Err((i + 1, format!("duplicate key `{k}`")));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::Rng;
    use crate::cvnn::batch::ComplexBatch;
    use crate::cvnn::unet::{unet_forward, CvUNetConfig, CvUNetParams, Mode};
    use num_complex::Complex;

    #[test]
    fn reload_restores_eval_outputs() {
        let cfg = CvUNetConfig::phasegen(2, 4, 20);
        let mut net = CvUNetParams::<f32>::init(&cfg, &mut Rng::new(1)).unwrap();
        let head = net.store.find("head.weight").unwrap();
        net.store.values_mut(head).iter_mut().for_each(|z| *z = Complex::new(0.3, -0.1));
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &net.store, &cfg.to_pairs()).unwrap();

        let cfg2 = CvUNetConfig::from_pairs(&read_model_cfg(dir.path()).unwrap()).unwrap();
        assert_eq!(cfg2, cfg);
        let mut fresh = CvUNetParams::<f32>::init(&cfg2, &mut Rng::new(2)).unwrap();
        load_checkpoint(dir.path(), &mut fresh.store).unwrap();

        let mut rng = Rng::new(3);
        let x = ComplexBatch::new([1, 2, 8, 8], (0..128).map(|_| Complex::new(rng.normal() as f32, rng.normal() as f32)).collect()).unwrap();
        let a = unet_forward(&x, &[5], &net, Mode::Eval).unwrap().output;
        let b = unet_forward(&x, &[5], &fresh, Mode::Eval).unwrap().output;
        assert_eq!(a, b);
        let manifest = fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
        assert!(manifest.lines().next().unwrap().starts_with("stem.weight\t4x3x3x3\t"));
    }

    #[test]
    fn layout_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = CvUNetParams::<f32>::init(&CvUNetConfig::phasegen(2, 4, 20), &mut Rng::new(1)).unwrap();
        save_checkpoint(dir.path(), &a.store, &[]).unwrap();
        let mut b = CvUNetParams::<f32>::init(&CvUNetConfig::phasegen(2, 8, 20), &mut Rng::new(1)).unwrap();
        assert!(load_checkpoint(dir.path(), &mut b.store).is_err());
    }

    #[test]
    fn pairs_parsing() {
        let p = parse_pairs("# c\n a = 1 \n\nb=x y\n").unwrap();
        assert_eq!(p, vec![("a".into(), "1".into()), ("b".into(), "x y".into())]);
        assert_eq!(parse_pairs("a\n").unwrap_err().0, 1);
        assert_eq!(parse_pairs("a=1\na=2").unwrap_err().0, 2);
    }
}
