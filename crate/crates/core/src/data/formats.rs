//! IDX (MNIST) and CIFAR-10 binary readers.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

pub const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;
pub const CIFAR_MEAN: [f64; 3] = [0.4914, 0.4822, 0.4465];
pub const CIFAR_STD: [f64; 3] = [0.2470, 0.2435, 0.2616];

/// Reads a file, inflating it when it starts with the gzip magic.
fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        return Ok(out);
    }
    Ok(raw)
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::TruncatedFile(format!("{what} header")))
}

/// Returns (count, rows, cols, pixels scaled to [0, 1]).
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<f64>)> {
    let magic = be_u32(bytes, 0, "image")?;
    if magic != IDX_IMAGES {
        return Err(Error::BadMagic(format!("expected {IDX_IMAGES:#010x} for images, found {magic:#010x}")));
    }
    let n = be_u32(bytes, 4, "image")? as usize;
    let rows = be_u32(bytes, 8, "image")? as usize;
    let cols = be_u32(bytes, 12, "image")? as usize;
    let len = n * rows * cols;
    let pixels = bytes
        .get(16..16 + len)
        .ok_or_else(|| Error::TruncatedFile(format!("expected {len} pixel bytes, found {}", bytes.len().saturating_sub(16))))?;
    Ok((n, rows, cols, pixels.iter().map(|&p| p as f64 / 255.0).collect()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0, "label")?;
    if magic != IDX_LABELS {
        return Err(Error::BadMagic(format!("expected {IDX_LABELS:#010x} for labels, found {magic:#010x}")));
    }
    let n = be_u32(bytes, 4, "label")? as usize;
    let labels = bytes
        .get(8..8 + n)
        .ok_or_else(|| Error::TruncatedFile(format!("expected {n} label bytes, found {}", bytes.len().saturating_sub(8))))?;
    Ok(labels.iter().map(|&l| l as usize).collect())
}

/// Loads an IDX image/label pair (optionally gzipped) as `[n, 1, rows, cols]`.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let (n, rows, cols, pixels) = parse_idx_images(&read_maybe_gz(images)?)?;
    let labels = parse_idx_labels(&read_maybe_gz(labels)?)?;
    if labels.len() != n {
        return Err(Error::CountMismatch { images: n, labels: labels.len() });
    }
    if n == 0 {
        return Err(Error::TruncatedFile("no samples".into()));
    }
    Dataset::new(Tensor::new(&[n, 1, rows, cols], pixels)?, labels, 10)
}

/// Parses CIFAR-10 records; `normalize` applies the per-channel constants.
pub fn parse_cifar10(bytes: &[u8], normalize: bool) -> Result<(Vec<f64>, Vec<usize>)> {
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
        return Err(Error::TruncatedFile(format!(
            "size {} is not a positive multiple of {CIFAR_RECORD}",
            bytes.len()
        )));
    }
    let plane = 32 * 32;
    let mut pixels = Vec::with_capacity(bytes.len() / CIFAR_RECORD * 3 * plane);
    let mut labels = Vec::with_capacity(bytes.len() / CIFAR_RECORD);
    for rec in bytes.chunks_exact(CIFAR_RECORD) {
        let label = rec[0] as usize;
        if label >= 10 {
            return Err(Error::LabelOutOfRange { label, classes: 10 });
        }
        labels.push(label);
        for (i, &p) in rec[1..].iter().enumerate() {
            let v = p as f64 / 255.0;
            let c = i / plane;
            pixels.push(if normalize { (v - CIFAR_MEAN[c]) / CIFAR_STD[c] } else { v });
        }
    }
    Ok((pixels, labels))
}

/// Loads and concatenates CIFAR-10 binary batch files as `[n, 3, 32, 32]`.
pub fn load_cifar10_bin<P: AsRef<Path>>(paths: &[P], normalize: bool) -> Result<Dataset> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let mut raw = Vec::new();
        File::open(path.as_ref())?.read_to_end(&mut raw)?;
        let (p, l) = parse_cifar10(&raw, normalize)?;
        pixels.extend(p);
        labels.extend(l);
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("no CIFAR-10 files given".into()));
    }
    Dataset::new(Tensor::new(&[labels.len(), 3, 32, 32], pixels)?, labels, 10)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for x in [IDX_IMAGES, n, rows, cols] {
            v.extend_from_slice(&x.to_be_bytes());
        }
        v.extend_from_slice(pixels);
        v
    }

    #[test]
    fn idx_images_parse() {
        let pixels: Vec<u8> = (0..7840).map(|i| (i % 256) as u8).collect();
        let (n, r, c, px) = parse_idx_images(&idx_images(10, 28, 28, &pixels)).unwrap();
        assert_eq!((n, r, c, px.len()), (10, 28, 28, 7840));
        assert_eq!(px[255], 1.0);
    }

    #[test]
    fn idx_truncated() {
        let err = parse_idx_images(&idx_images(10, 28, 28, &[0; 100])).unwrap_err();
        assert!(err.to_string().contains("truncated file"), "{err}");
    }

    #[test]
    fn idx_bad_magic() {
        let mut bytes = idx_images(1, 1, 1, &[0]);
        bytes[3] = 0x01;
        assert!(matches!(parse_idx_images(&bytes), Err(Error::BadMagic(_))));
    }

    #[test]
    fn idx_labels_parse() {
        let mut v = Vec::new();
        v.extend_from_slice(&IDX_LABELS.to_be_bytes());
        v.extend_from_slice(&2u32.to_be_bytes());
        v.extend_from_slice(&[9, 3]);
        assert_eq!(parse_idx_labels(&v).unwrap(), [9, 3]);
    }

    #[test]
    fn cifar_record_round_trip() {
        let mut rec = vec![7u8];
        rec.extend((0..3072).map(|i| (i * 7 % 256) as u8));
        let (px, labels) = parse_cifar10(&rec, false).unwrap();
        assert_eq!(labels, [7]);
        for (i, &p) in px.iter().enumerate() {
            assert_eq!(p, rec[i + 1] as f64 / 255.0);
        }
        let (norm, _) = parse_cifar10(&rec, true).unwrap();
        assert!((norm[2000] - (px[2000] - CIFAR_MEAN[1]) / CIFAR_STD[1]).abs() < 1e-15);
    }

    #[test]
    fn cifar_errors() {
        let mut rec = vec![255u8];
        rec.extend(std::iter::repeat_n(0u8, 3072));
        let err = parse_cifar10(&rec, true).unwrap_err();
        assert!(err.to_string().contains("label out of range"), "{err}");
        assert!(parse_cifar10(&rec[..3000], true).is_err());
    }
}
