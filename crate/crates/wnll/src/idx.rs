//! MNIST-style IDX files, optionally gzip-compressed.
//!
//! Offsets in errors refer to the decompressed byte stream.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::{Compression, GzBuilder};
use wnll_core::{DataMatrix, LabelVector};

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const CLASSES: usize = 10;

/// Raw `u8` images, `count × rows × cols`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out).map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    match bytes.get(offset..offset + 4) {
        Some(b) => Ok(u32::from_be_bytes(b.try_into().expect("four bytes"))),
        None => Err(Error::Truncated { path: path.into(), offset: bytes.len() as u64, needed: (offset + 4 - bytes.len()) as u64 }),
    }
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic { path: path.into(), offset: 0, expected, found });
    }
    Ok(())
}

fn payload<'a>(bytes: &'a [u8], start: usize, len: usize, path: &Path) -> Result<&'a [u8]> {
    bytes.get(start..start + len).ok_or_else(|| Error::Truncated {
        path: path.into(),
        offset: bytes.len() as u64,
        needed: (start + len - bytes.len()) as u64,
    })
}

pub fn read_images(path: &Path) -> Result<IdxImages> {
    let bytes = read_bytes(path)?;
    check_magic(&bytes, IMAGES_MAGIC, path)?;
    let count = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let pixels = payload(&bytes, 16, count * rows * cols, path)?.to_vec();
    Ok(IdxImages { count, rows, cols, pixels })
}

pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_bytes(path)?;
    check_magic(&bytes, LABELS_MAGIC, path)?;
    let count = be_u32(&bytes, 4, path)? as usize;
    Ok(payload(&bytes, 8, count, path)?.to_vec())
}

/// Images scaled to `[0, 1]` by `/ 255` and labels `0..10`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<(DataMatrix, LabelVector)> {
    let images = read_images(images_path)?;
    let labels = read_labels(labels_path)?;
    if images.count != labels.len() {
        return Err(Error::CountMismatch {
            images_path: images_path.into(),
            labels_path: labels_path.into(),
            images: images.count as u64,
            labels: labels.len() as u64,
        });
    }
    if let Some(pos) = labels.iter().position(|&l| l as usize >= CLASSES) {
        return Err(Error::BadValue {
            path: labels_path.into(),
            offset: 8 + pos as u64,
            message: format!("label {} outside 0..{CLASSES}", labels[pos]),
        });
    }
    let d = images.rows * images.cols;
    let values = images.pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let data = DataMatrix::new(images.count, d, values)?;
    let labels = LabelVector::new(labels.iter().map(|&l| l as usize).collect(), CLASSES)?;
    Ok((data, labels))
}

fn write_bytes(path: &Path, bytes: &[u8], gzip: bool) -> Result<()> {
    let out = if gzip {
        let mut enc: GzEncoder<Vec<u8>> = GzBuilder::new().mtime(0).write(Vec::new(), Compression::default());
        enc.write_all(bytes).and_then(|_| enc.finish()).map_err(|e| Error::io(path, e))?
    } else {
        bytes.to_vec()
    };
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_images(path: &Path, images: &IdxImages, gzip: bool) -> Result<()> {
    let mut bytes = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    bytes.extend_from_slice(&images.pixels);
    write_bytes(path, &bytes, gzip)
}

pub fn write_labels(path: &Path, labels: &[u8], gzip: bool) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    bytes.extend_from_slice(labels);
    write_bytes(path, &bytes, gzip)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images(count: usize) -> IdxImages {
        IdxImages { count, rows: 28, cols: 28, pixels: (0..count * 784).map(|i| (i % 256) as u8).collect() }
    }

    #[test]
    fn round_trip_plain_and_gzip() {
        let dir = tempfile::tempdir().unwrap();
        for gzip in [false, true] {
            let (ip, lp) = (dir.path().join(format!("i{gzip}")), dir.path().join(format!("l{gzip}")));
            write_images(&ip, &images(3), gzip).unwrap();
            write_labels(&lp, &[7, 0, 9], gzip).unwrap();
            let (x, y) = load_idx(&ip, &lp).unwrap();
            assert_eq!((x.rows(), x.cols()), (3, 784));
            assert_eq!(x.row(0)[255], 1.0);
            assert_eq!(y.labels(), &[7, 0, 9]);
            assert_eq!(y.classes(), 10);
        }
    }

    #[test]
    fn zero_images_map_to_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        write_images(&ip, &IdxImages { count: 10, rows: 28, cols: 28, pixels: vec![0; 7840] }, false).unwrap();
        write_labels(&lp, &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9], false).unwrap();
        let (x, _) = load_idx(&ip, &lp).unwrap();
        assert_eq!(x.cols(), 784);
        assert!(x.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        write_labels(&ip, &[1, 2], false).unwrap();
        write_labels(&lp, &[1, 2], false).unwrap();
        let err = load_idx(&ip, &lp).unwrap_err();
        assert!(matches!(err, Error::BadMagic { found: LABELS_MAGIC, offset: 0, .. }));
        assert!(err.to_string().contains("bad magic"));

        write_images(&ip, &images(3), false).unwrap();
        let err = load_idx(&ip, &lp).unwrap_err();
        assert!(matches!(err, Error::CountMismatch { images: 3, labels: 2, .. }));

        let mut bytes = fs::read(&ip).unwrap();
        bytes.truncate(100);
        fs::write(&ip, &bytes).unwrap();
        let err = read_images(&ip).unwrap_err();
        assert!(matches!(err, Error::Truncated { offset: 100, .. }), "{err}");
        assert!(err.to_string().contains(&ip.display().to_string()));

        write_images(&ip, &images(2), false).unwrap();
        write_labels(&lp, &[1, 12], false).unwrap();
        assert!(matches!(load_idx(&ip, &lp).unwrap_err(), Error::BadValue { offset: 9, .. }));

        assert!(matches!(load_idx(&dir.path().join("missing"), &lp).unwrap_err(), Error::Io { .. }));
    }
}
