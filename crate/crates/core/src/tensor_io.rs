//! `CXT1` binary tensor files.
//!
//! Layout, all little-endian, no padding:
//!
//! ```text
//! 0..4   magic "CXT1" (43 58 54 31)
//! 4..6   version, u16 = 1
//! 6      dtype, 1 = complex with two f32 per sample
//! 7      rank
//! 8..    rank x u64 dims
//! ..     row-major samples as (re, im) f32 pairs
//! ```

use std::fs;
use std::path::Path;

use num_complex::Complex32;
use thiserror::Error;

use crate::complex::ComplexImage;

pub const MAGIC: [u8; 4] = *b"CXT1";
pub const VERSION: u16 = 1;
pub const DTYPE_COMPLEX64: u8 = 1;

const HEADER_LEN: usize = 8;
const SAMPLE_LEN: usize = 8;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("bad magic {found:02x?}, expected \"CXT1\"")]
    BadMagic { found: Vec<u8> },

    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),

    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),

    #[error("truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("dimension overflow: dims {dims:?} do not fit in memory")]
    DimensionOverflow { dims: Vec<u64> },

    #[error("{extra} trailing bytes after payload")]
    TrailingBytes { extra: usize },

    #[error("expected rank {expected}, found rank {found}")]
    RankMismatch { expected: usize, found: usize },

    #[error("non-finite sample at index {0}")]
    NonFinite(usize),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Raw decoded tensor: dims plus row-major samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<Complex32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<Complex32>) -> Result<Self, TensorError> {
        let n = element_count(&dims.iter().map(|&d| d as u64).collect::<Vec<_>>())?;
        if n != data.len() {
            return Err(TensorError::Truncated {
                expected: n * SAMPLE_LEN,
                found: data.len() * SAMPLE_LEN,
            });
        }
        Ok(Self { dims, data })
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }
}

fn element_count(dims: &[u64]) -> Result<usize, TensorError> {
    let overflow = || TensorError::DimensionOverflow {
        dims: dims.to_vec(),
    };
    let mut n: usize = 1;
    for &d in dims {
        let d = usize::try_from(d).map_err(|_| overflow())?;
        n = n.checked_mul(d).ok_or_else(overflow)?;
    }
    // The payload size must be addressable too.
    n.checked_mul(SAMPLE_LEN).ok_or_else(overflow)?;
    Ok(n)
}

pub fn encode(dims: &[usize], data: &[Complex32]) -> Result<Vec<u8>, TensorError> {
    let rank = u8::try_from(dims.len()).map_err(|_| TensorError::DimensionOverflow {
        dims: dims.iter().map(|&d| d as u64).collect(),
    })?;
    let n = element_count(&dims.iter().map(|&d| d as u64).collect::<Vec<_>>())?;
    if n != data.len() {
        return Err(TensorError::Truncated {
            expected: n * SAMPLE_LEN,
            found: data.len() * SAMPLE_LEN,
        });
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * dims.len() + n * SAMPLE_LEN);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(DTYPE_COMPLEX64);
    out.push(rank);
    for &d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for z in data {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Tensor, TensorError> {
    let prefix = &bytes[..bytes.len().min(MAGIC.len())];
    if !MAGIC.starts_with(prefix) {
        return Err(TensorError::BadMagic {
            found: prefix.to_vec(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(TensorError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(TensorError::UnsupportedVersion(version));
    }
    if bytes[6] != DTYPE_COMPLEX64 {
        return Err(TensorError::UnsupportedDtype(bytes[6]));
    }
    let rank = bytes[7] as usize;
    let dims_end = HEADER_LEN + 8 * rank;
    if bytes.len() < dims_end {
        return Err(TensorError::Truncated {
            expected: dims_end,
            found: bytes.len(),
        });
    }
    let dims: Vec<u64> = bytes[HEADER_LEN..dims_end]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let n = element_count(&dims)?;
    let expected = n
        .checked_mul(SAMPLE_LEN)
        .and_then(|p| p.checked_add(dims_end))
        .ok_or_else(|| TensorError::DimensionOverflow { dims: dims.clone() })?;
    if bytes.len() < expected {
        return Err(TensorError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(TensorError::TrailingBytes {
            extra: bytes.len() - expected,
        });
    }
    let data = bytes[dims_end..]
        .chunks_exact(SAMPLE_LEN)
        .map(|c| {
            let re = f32::from_le_bytes(c[..4].try_into().expect("4 bytes"));
            let im = f32::from_le_bytes(c[4..].try_into().expect("4 bytes"));
            Complex32::new(re, im)
        })
        .collect();
    Ok(Tensor {
        dims: dims.into_iter().map(|d| d as usize).collect(),
        data,
    })
}

pub fn write_raw(path: impl AsRef<Path>, tensor: &Tensor) -> Result<(), TensorError> {
    let path = path.as_ref();
    let bytes = encode(&tensor.dims, &tensor.data)?;
    fs::write(path, bytes).map_err(|source| TensorError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<Tensor, TensorError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| TensorError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes)
}

/// Writes a complex image as a rank-2 tensor `[height, width]`.
pub fn write_tensor(path: impl AsRef<Path>, z: &ComplexImage<f32>) -> Result<(), TensorError> {
    let path = path.as_ref();
    let bytes = encode(&[z.height(), z.width()], z.data())?;
    fs::write(path, bytes).map_err(|source| TensorError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a rank-2 tensor back into a complex image.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<ComplexImage<f32>, TensorError> {
    let t = read_raw(path)?;
    tensor_to_image(t)
}

pub fn tensor_to_image(t: Tensor) -> Result<ComplexImage<f32>, TensorError> {
    if t.rank() != 2 {
        return Err(TensorError::RankMismatch {
            expected: 2,
            found: t.rank(),
        });
    }
    if let Some(i) = t.data.iter().position(|z| !z.is_finite()) {
        return Err(TensorError::NonFinite(i));
    }
    let (h, w) = (t.dims[0], t.dims[1]);
    if h == 0 || w == 0 {
        return Err(TensorError::DimensionOverflow {
            dims: vec![h as u64, w as u64],
        });
    }
    Ok(ComplexImage::from_parts(h, w, t.data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::Rng;

    fn random_image(seed: u64) -> ComplexImage<f32> {
        let mut rng = Rng::new(seed);
        ComplexImage::from_fn(8, 8, |_, _| {
            Complex32::new(rng.normal() as f32, rng.normal() as f32)
        })
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.cxt");
        let z = random_image(1);
        write_tensor(&path, &z).unwrap();
        let back = read_tensor(&path).unwrap();
        for (a, b) in z.data().iter().zip(back.data()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&[2, 3], &[Complex32::new(1.0, -2.0); 6]).unwrap();
        assert_eq!(&bytes[..4], &[0x43, 0x58, 0x54, 0x31]);
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(bytes[6], 1);
        assert_eq!(bytes[7], 2);
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &3u64.to_le_bytes());
        assert_eq!(&bytes[24..28], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[28..32], &(-2.0f32).to_le_bytes());
        assert_eq!(bytes.len(), 24 + 6 * 8);
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = encode(&[1, 1], &[Complex32::new(0.0, 0.0)]).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(TensorError::BadMagic { .. })));
    }

    #[test]
    fn truncated_payload() {
        let mut bytes = encode(&[4, 4], &[Complex32::new(1.0, 0.0); 16]).unwrap();
        bytes.truncate(8 + 16 + 3 * 8);
        assert!(matches!(decode(&bytes), Err(TensorError::Truncated { .. })));
        assert!(matches!(decode(&bytes[..6]), Err(TensorError::Truncated { .. })));
        assert!(matches!(decode(b"CX"), Err(TensorError::Truncated { .. })));
    }

    #[test]
    fn dimension_overflow() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"CXT1");
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.push(1);
        bytes.push(2);
        bytes.extend_from_slice(&u64::MAX.to_le_bytes());
        bytes.extend_from_slice(&4u64.to_le_bytes());
        assert!(matches!(
            decode(&bytes),
            Err(TensorError::DimensionOverflow { .. })
        ));
    }

    #[test]
    fn trailing_bytes_and_bad_version() {
        let mut bytes = encode(&[1], &[Complex32::new(0.0, 0.0)]).unwrap();
        bytes.push(0);
        assert!(matches!(decode(&bytes), Err(TensorError::TrailingBytes { extra: 1 })));
        let mut bytes = encode(&[1], &[Complex32::new(0.0, 0.0)]).unwrap();
        bytes[4] = 2;
        assert!(matches!(decode(&bytes), Err(TensorError::UnsupportedVersion(2))));
    }

    #[test]
    fn rank_checked_when_reading_images() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.cxt");
        write_raw(&path, &Tensor::new(vec![3], vec![Complex32::new(0.0, 0.0); 3]).unwrap()).unwrap();
        assert!(matches!(
            read_tensor(&path),
            Err(TensorError::RankMismatch { expected: 2, found: 1 })
        ));
    }
}
