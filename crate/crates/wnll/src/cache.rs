//! Binary point-cloud cache: `"LLBL"`, version `u32`, `n u64`, `d u64`, then
//! `n · d` little-endian `f64`, all integers little-endian.

use std::fs;
use std::path::Path;

use wnll_core::DataMatrix;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"LLBL";
pub const VERSION: u32 = 1;
const HEADER: usize = 4 + 4 + 8 + 8;

pub fn write_cache(path: &Path, data: &DataMatrix) -> Result<()> {
    let mut bytes = Vec::with_capacity(HEADER + 8 * data.values().len());
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(data.rows() as u64).to_le_bytes());
    bytes.extend_from_slice(&(data.cols() as u64).to_le_bytes());
    for v in data.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_cache(path: &Path) -> Result<DataMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER {
        return Err(Error::Truncated { path: path.into(), offset: bytes.len() as u64, needed: (HEADER - bytes.len()) as u64 });
    }
    if bytes[..4] != MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            offset: 0,
            expected: u32::from_be_bytes(MAGIC),
            found: u32::from_be_bytes(bytes[..4].try_into().expect("four bytes")),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("four bytes"));
    if version != VERSION {
        return Err(Error::Version { path: path.into(), found: version, supported: VERSION });
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("eight bytes")) as usize;
    let d = u64::from_le_bytes(bytes[16..24].try_into().expect("eight bytes")) as usize;
    let want = n.checked_mul(d).and_then(|c| c.checked_mul(8)).and_then(|c| c.checked_add(HEADER));
    match want {
        Some(w) if w <= bytes.len() => {}
        _ => {
            let needed = want.map_or(u64::MAX, |w| (w - bytes.len()) as u64);
            return Err(Error::Truncated { path: path.into(), offset: bytes.len() as u64, needed });
        }
    }
    let values = bytes[HEADER..HEADER + 8 * n * d]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
        .collect();
    Ok(DataMatrix::new(n, d, values)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.llbl");
        let values = vec![0.1, -0.0, 1e-310, f64::MAX, 3.0, 1.0 / 3.0];
        let x = DataMatrix::new(3, 2, values).unwrap();
        write_cache(&p, &x).unwrap();
        let y = read_cache(&p).unwrap();
        let bits = |m: &DataMatrix| m.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&x), bits(&y));
    }

    #[test]
    fn rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.llbl");
        write_cache(&p, &DataMatrix::new(2, 2, vec![1.0; 4]).unwrap()).unwrap();
        let mut bytes = fs::read(&p).unwrap();
        bytes.pop();
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_cache(&p), Err(Error::Truncated { .. })));
        bytes[0] = b'X';
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_cache(&p), Err(Error::BadMagic { .. })));
        bytes[0] = b'L';
        bytes[4] = 9;
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_cache(&p), Err(Error::Version { found: 9, .. })));
    }
}
