//! Dataset directories and real/synthetic mixing.
//!
//! A dataset directory holds one CXT1 file per record and a `manifest.tsv`
//! with lines `id<TAB>role<TAB>path`; paths are relative to the directory.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use super::phantom::{generate_phantom, PhantomRecord};
use crate::complex::Rng;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.tsv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    /// Measured (ground-truth) phase.
    Real,
    /// Generated phase.
    Synthetic,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Real => "real",
            Role::Synthetic => "synthetic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "real" => Some(Role::Real),
            "synthetic" => Some(Role::Synthetic),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub role: Role,
    pub path: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, role: Role) -> usize {
        self.entries.iter().filter(|e| e.role == role).count()
    }

    pub fn ids(&self, role: Role) -> Vec<&str> {
        self.entries.iter().filter(|e| e.role == role).map(|e| e.id.as_str()).collect()
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}\t{}\t{}\n", e.id, e.role, e.path.display()))
            .collect()
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse {
                path: origin.display().to_string(),
                line: i + 1,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, role, path] = fields[..] else {
                return Err(bad(format!("expected 3 tab-separated fields, got {}", fields.len())));
            };
            let role = Role::parse(role).ok_or_else(|| bad(format!("unknown role `{role}`")))?;
            if id.is_empty() || path.is_empty() {
                return Err(bad("empty id or path".into()));
            }
            if !seen.insert((id.to_string(), role)) {
                return Err(bad(format!("duplicate entry `{id}` ({role})")));
            }
            entries.push(ManifestEntry {
                id: id.to_string(),
                role,
                path: PathBuf::from(path),
            });
        }
        Ok(Self { entries })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Loads every record, resolving paths against `dir`.
    pub fn load_records(&self, dir: impl AsRef<Path>) -> Result<Vec<PhantomRecord>> {
        self.entries
            .iter()
            .map(|e| PhantomRecord::read(dir.as_ref().join(&e.path)))
            .collect()
    }
}

/// Writes `count` phantoms (seeds `seed, seed + 1, ...`) and their manifest.
pub fn write_phantom_dataset(dir: impl AsRef<Path>, seed: u64, count: usize, size: usize) -> Result<Manifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Manifest::default();
    for i in 0..count {
        let id = format!("phantom_{:05}", i);
        let file = PathBuf::from(format!("{id}.cxt"));
        generate_phantom(seed.wrapping_add(i as u64), size)?.write(dir.join(&file))?;
        manifest.entries.push(ManifestEntry {
            id,
            role: Role::Real,
            path: file,
        });
    }
    manifest.write(dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Fraction of the mixed set drawn from the real records.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixSpec {
    pub real_fraction: f64,
    pub seed: u64,
}

impl MixSpec {
    pub fn new(real_fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&real_fraction) {
            return Err(Error::InvalidArgument(format!("real fraction must be in [0, 1], got {real_fraction}")));
        }
        Ok(Self { real_fraction, seed })
    }
}

/// Builds a training set of `synthetic.len()` records: `round(f * total)`
/// real records chosen without replacement, the rest synthetic records whose
/// ids were not chosen as real. Ids are unique in the result.
pub fn mix_datasets(real: &[ManifestEntry], synthetic: &[ManifestEntry], spec: &MixSpec) -> Result<Manifest> {
    MixSpec::new(spec.real_fraction, spec.seed)?;
    let total = synthetic.len();
    let n_real = (spec.real_fraction * total as f64).round() as usize;
    if n_real > real.len() {
        return Err(Error::InvalidArgument(format!(
            "fraction {} of {total} needs {n_real} real records, only {} available",
            spec.real_fraction,
            real.len()
        )));
    }
    let mut order: Vec<usize> = (0..real.len()).collect();
    Rng::new(spec.seed).shuffle(&mut order);
    let mut chosen: Vec<usize> = order[..n_real].to_vec();
    chosen.sort_unstable();

    let mut ids: HashSet<&str> = HashSet::new();
    let mut entries = Vec::with_capacity(total);
    for &i in &chosen {
        if !ids.insert(real[i].id.as_str()) {
            return Err(Error::InvalidArgument(format!("duplicate real id `{}`", real[i].id)));
        }
        entries.push(ManifestEntry {
            role: Role::Real,
            ..real[i].clone()
        });
    }
    for e in synthetic {
        if entries.len() == total {
            break;
        }
        if ids.insert(e.id.as_str()) {
            entries.push(ManifestEntry {
                role: Role::Synthetic,
                ..e.clone()
            });
        }
    }
    if entries.len() < total {
        return Err(Error::InvalidArgument(format!(
            "only {} distinct synthetic records left for {} slots",
            entries.len() - n_real,
            total - n_real
        )));
    }
    Ok(Manifest { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(n: usize, role: Role) -> Vec<ManifestEntry> {
        (0..n)
            .map(|i| ManifestEntry {
                id: format!("r{i:03}"),
                role,
                path: PathBuf::from(format!("{}/r{i:03}.cxt", role.name())),
            })
            .collect()
    }

    #[test]
    fn counts_and_partition() {
        let (real, syn) = (set(200, Role::Real), set(200, Role::Synthetic));
        let m = mix_datasets(&real, &syn, &MixSpec::new(0.1, 4).unwrap()).unwrap();
        assert_eq!(m.len(), 200);
        assert_eq!(m.count(Role::Real), 20);
        assert_eq!(m.count(Role::Synthetic), 180);
        let ids: HashSet<&str> = m.entries.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids.len(), 200);
        assert_eq!(m, mix_datasets(&real, &syn, &MixSpec::new(0.1, 4).unwrap()).unwrap());
        assert_ne!(m, mix_datasets(&real, &syn, &MixSpec::new(0.1, 5).unwrap()).unwrap());
    }

    #[test]
    fn extremes_and_errors() {
        let (real, syn) = (set(10, Role::Real), set(10, Role::Synthetic));
        assert_eq!(mix_datasets(&real, &syn, &MixSpec::new(1.0, 0).unwrap()).unwrap().count(Role::Real), 10);
        assert_eq!(mix_datasets(&real, &syn, &MixSpec::new(0.0, 0).unwrap()).unwrap().count(Role::Synthetic), 10);
        assert!(mix_datasets(&real[..3], &syn, &MixSpec::new(0.5, 0).unwrap()).is_err());
        assert!(MixSpec::new(1.5, 0).is_err());
    }

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_phantom_dataset(dir.path(), 9, 3, 16).unwrap();
        let back = Manifest::read(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(m, back);
        let recs = back.load_records(dir.path()).unwrap();
        assert_eq!(recs[1], generate_phantom(10, 16).unwrap());
        assert!(Manifest::parse("a\tbogus\tp\n", Path::new("m")).is_err());
        assert!(Manifest::parse("a\treal\n", Path::new("m")).is_err());
    }
}
