//! Network checkpoints: `"TNET"`, version `u32`, width count `u32`, the
//! layer spec as `u64` widths, then every layer's weights and biases as
//! little-endian `f64`, DNN layers first, then buffer, then head.

use std::fs;
use std::path::{Path, PathBuf};

use wnll_core::net::NetworkParams;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"TNET";
pub const VERSION: u32 = 1;

pub fn encode(params: &NetworkParams) -> Vec<u8> {
    let spec = params.layer_spec();
    let mut bytes = Vec::with_capacity(12 + 8 * (spec.len() + params.param_count()));
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    for w in &spec {
        bytes.extend_from_slice(&(*w as u64).to_le_bytes());
    }
    for layer in params.layers() {
        for v in layer.weight.iter().chain(&layer.bias) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

/// `path` with `.partial` appended.
pub fn partial_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

/// Writes to the `.partial` sibling first and renames it into place.
pub fn write_checkpoint(path: &Path, params: &NetworkParams) -> Result<()> {
    let tmp = partial_path(path);
    fs::write(&tmp, encode(params)).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Leaves `params` at the `.partial` path, for runs that failed midway.
pub fn write_partial(path: &Path, params: &NetworkParams) -> Result<PathBuf> {
    let tmp = partial_path(path);
    fs::write(&tmp, encode(params)).map_err(|e| Error::io(&tmp, e))?;
    Ok(tmp)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        match self.bytes.get(self.at..self.at + n) {
            Some(b) => {
                self.at += n;
                Ok(b)
            }
            None => Err(Error::Truncated {
                path: self.path.into(),
                offset: self.bytes.len() as u64,
                needed: (self.at + n - self.bytes.len()) as u64,
            }),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }

    fn f64s(&mut self, out: &mut [f64]) -> Result<()> {
        let at = self.at;
        let bytes = self.take(8 * out.len())?;
        for (i, (v, c)) in out.iter_mut().zip(bytes.chunks_exact(8)).enumerate() {
            *v = f64::from_le_bytes(c.try_into().expect("eight bytes"));
            if !v.is_finite() {
                return Err(Error::BadValue {
                    path: self.path.into(),
                    offset: (at + 8 * i) as u64,
                    message: "non-finite parameter".into(),
                });
            }
        }
        Ok(())
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<NetworkParams> {
    let mut c = Cursor { bytes, at: 0, path };
    let magic = c.take(4).map_err(|_| Error::BadMagic {
        path: path.into(),
        offset: 0,
        expected: u32::from_be_bytes(MAGIC),
        found: 0,
    })?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            offset: 0,
            expected: u32::from_be_bytes(MAGIC),
            found: u32::from_be_bytes(magic.try_into().expect("four bytes")),
        });
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Version { path: path.into(), found: version, supported: VERSION });
    }
    let widths = c.u32()? as usize;
    if !(3..=64).contains(&widths) {
        return Err(Error::BadValue { path: path.into(), offset: 8, message: format!("{widths} layer widths") });
    }
    let mut spec = Vec::with_capacity(widths);
    for i in 0..widths {
        let w = c.u64()?;
        if w == 0 || w > 1 << 24 {
            return Err(Error::BadValue { path: path.into(), offset: 12 + 8 * i as u64, message: format!("layer width {w}") });
        }
        spec.push(w as usize);
    }
    let mut params = NetworkParams::zeros(&spec)?;
    for layer in params.dnn.iter_mut().chain([&mut params.buffer, &mut params.head]) {
        c.f64s(&mut layer.weight)?;
        c.f64s(&mut layer.bias)?;
    }
    if c.at != bytes.len() {
        return Err(Error::BadValue { path: path.into(), offset: c.at as u64, message: "trailing bytes".into() });
    }
    Ok(params)
}

pub fn read_checkpoint(path: &Path) -> Result<NetworkParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use wnll_core::net::init_network;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("net.tnet");
        let net = init_network(&[4, 6, 5, 3], 2).unwrap();
        write_checkpoint(&p, &net).unwrap();
        assert!(!partial_path(&p).exists());
        assert_eq!(read_checkpoint(&p).unwrap(), net);
    }

    #[test]
    fn rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("net.tnet");
        let mut bytes = encode(&init_network(&[2, 3, 2], 1).unwrap());
        bytes[4] = 2;
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_checkpoint(&p), Err(Error::Version { found: 2, .. })));
        bytes[4] = 1;
        bytes[0] = b'X';
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_checkpoint(&p), Err(Error::BadMagic { .. })));
        bytes[0] = b'T';
        bytes.truncate(bytes.len() - 3);
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_checkpoint(&p), Err(Error::Truncated { .. })));
    }
}
