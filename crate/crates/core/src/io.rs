//! File formats: NDT tensors, netpbm previews, atomic writes.
//!
//! NDT layout (little-endian):
//!
//! ```text
//! "NDTENSOR"            8 bytes magic
//! 0x01                  format version
//! 0x01                  dtype: IEEE-754 binary32
//! ndim                  1 byte, >= 1
//! extents               ndim x u32
//! payload               product(extents) x f32, row-major
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const NDT_MAGIC: &[u8; 8] = b"NDTENSOR";
pub const NDT_VERSION: u8 = 0x01;
pub const NDT_DTYPE_F32: u8 = 0x01;
pub const NDT_EXTENSION: &str = "ndt";

pub fn encode_ndt(t: &Tensor) -> Result<Vec<u8>> {
    if t.ndim() > u8::MAX as usize {
        return Err(Error::invalid(format!("{} axes do not fit the NDT header", t.ndim())));
    }
    let mut out = Vec::with_capacity(11 + 4 * t.ndim() + 4 * t.len());
    out.extend_from_slice(NDT_MAGIC);
    out.push(NDT_VERSION);
    out.push(NDT_DTYPE_F32);
    out.push(t.ndim() as u8);
    for &n in t.shape() {
        let n = u32::try_from(n).map_err(|_| Error::invalid(format!("extent {n} exceeds u32")))?;
        out.extend_from_slice(&n.to_le_bytes());
    }
    for &v in t.data() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::invalid(format!("value {v} not representable as finite f32")));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_ndt(bytes: &[u8]) -> Result<Tensor> {
    let bad = |msg: String| Error::Format(msg);
    if bytes.len() < 11 || &bytes[..8] != NDT_MAGIC {
        return Err(bad("missing NDTENSOR magic".into()));
    }
    if bytes[8] != NDT_VERSION {
        return Err(bad(format!("unsupported version {:#04x}", bytes[8])));
    }
    if bytes[9] != NDT_DTYPE_F32 {
        return Err(bad(format!("unsupported dtype {:#04x}", bytes[9])));
    }
    let ndim = bytes[10] as usize;
    if ndim == 0 {
        return Err(bad("zero-dimensional tensor".into()));
    }
    let header = 11 + 4 * ndim;
    if bytes.len() < header {
        return Err(bad("truncated header".into()));
    }
    let shape: Vec<usize> = bytes[11..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    if shape.contains(&0) {
        return Err(bad(format!("zero extent in shape {shape:?}")));
    }
    let count = shape
        .iter()
        .try_fold(1usize, |a, &n| a.checked_mul(n))
        .ok_or_else(|| bad(format!("shape {shape:?} overflows")))?;
    let payload = &bytes[header..];
    if Some(payload.len()) != count.checked_mul(4) {
        return Err(bad(format!(
            "header declares {count} elements but payload holds {} bytes",
            payload.len()
        )));
    }
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Tensor::new(&shape, data).map_err(|e| bad(e.to_string()))
}

pub fn read_ndt(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path)?;
    decode_ndt(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_ndt(path: &Path, t: &Tensor) -> Result<()> {
    write_atomic(path, &encode_ndt(t)?)
}

/// Write through a temporary file in the target directory and rename it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// `*.ndt` files directly inside `dir`, sorted by name.
pub fn list_ndt(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == NDT_EXTENSION) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// File stem used as the sample id (`case01.ndt` -> `case01`).
pub fn sample_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Binary greyscale netpbm image (P5).
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    debug_assert_eq!(pixels.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Binary RGB netpbm image (P6).
pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    debug_assert_eq!(rgb.len(), 3 * width * height);
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new(&[2, 3], vec![0.0, 1.0, 2.0, 3.0, 4.0, -0.5]).unwrap();
        let b = encode_ndt(&t).unwrap();
        assert_eq!(&b[..8], b"NDTENSOR");
        assert_eq!(&b[8..11], &[1, 1, 2]);
        assert_eq!(&b[11..19], &[2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(b.len(), 19 + 24);
        assert_eq!(&b[19 + 20..], &(-0.5f32).to_le_bytes());
        assert_eq!(decode_ndt(&b).unwrap(), t);
    }

    #[test]
    fn rejects_malformed() {
        let t = Tensor::new(&[4], vec![1.0; 4]).unwrap();
        let good = encode_ndt(&t).unwrap();
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode_ndt(&bad_magic), Err(Error::Format(_))));
        let mut bad_dtype = good.clone();
        bad_dtype[9] = 2;
        assert!(decode_ndt(&bad_dtype).is_err());
        assert!(decode_ndt(&good[..good.len() - 1]).is_err());
        let mut trailing = good.clone();
        trailing.push(0);
        assert!(decode_ndt(&trailing).is_err());
        let mut nan = good.clone();
        let n = nan.len();
        nan[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode_ndt(&nan).is_err());
    }

    #[test]
    fn atomic_write_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/a.ndt");
        let t = Tensor::new(&[2, 2, 2], (0..8).map(|v| v as f64 * 0.25).collect()).unwrap();
        write_ndt(&path, &t).unwrap();
        assert_eq!(read_ndt(&path).unwrap(), t);
        assert_eq!(list_ndt(&dir.path().join("sub")).unwrap(), vec![path.clone()]);
        assert_eq!(sample_id(&path), "a");
    }

    proptest::proptest! {
        #[test]
        fn f32_values_survive(values in proptest::collection::vec(-1e6f32..1e6, 1..64)) {
            let t = Tensor::new(&[values.len()], values.iter().map(|&v| v as f64).collect()).unwrap();
            let back = decode_ndt(&encode_ndt(&t).unwrap()).unwrap();
            proptest::prop_assert_eq!(back, t);
        }
    }
}
