use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Digit pair kept by [`load_mnist_idx`]; `base` becomes label 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MnistDigits {
    pub base: u8,
    pub target: u8,
}

impl Default for MnistDigits {
    fn default() -> Self {
        Self { base: 1, target: 7 }
    }
}

fn corrupt(path: &Path, detail: impl Into<String>) -> Error {
    Error::Corrupt {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| corrupt(path, "truncated header"))
}

/// Returns `(rows, cols, pixels)` with one `rows * cols` block per image.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IMAGE_MAGIC {
        return Err(corrupt(path, format!("bad image magic {magic:#010x}")));
    }
    let n = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let expected = n * rows * cols;
    let body = &bytes[16..];
    if body.len() != expected {
        return Err(corrupt(
            path,
            format!("header declares {expected} pixel bytes, file has {}", body.len()),
        ));
    }
    Ok((rows, cols, body.to_vec()))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != LABEL_MAGIC {
        return Err(corrupt(path, format!("bad label magic {magic:#010x}")));
    }
    let n = be_u32(&bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(corrupt(path, format!("header declares {n} labels, file has {}", body.len())));
    }
    Ok(body.to_vec())
}

pub fn write_idx_images(path: &Path, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    if rows * cols == 0 || !pixels.len().is_multiple_of(rows * cols) {
        return Err(Error::dim("idx images", "pixel count is not a whole number of images"));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGE_MAGIC, (pixels.len() / (rows * cols)) as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Loads an IDX image/label pair, keeps the two requested digits and scales
/// pixels to `[0, 1]`.
pub fn load_mnist_idx(images: &Path, labels: &Path, digits: MnistDigits) -> Result<Dataset> {
    let (rows, cols, pixels) = read_idx_images(images)?;
    let digit_labels = read_idx_labels(labels)?;
    let width = rows * cols;
    let n = if width == 0 { 0 } else { pixels.len() / width };
    if n != digit_labels.len() {
        return Err(corrupt(
            labels,
            format!("{} labels for {n} images", digit_labels.len()),
        ));
    }
    let mut data = Vec::new();
    let mut out_labels = Vec::new();
    for (i, d) in digit_labels.iter().enumerate() {
        let y = if *d == digits.base {
            0
        } else if *d == digits.target {
            1
        } else {
            continue;
        };
        data.extend(pixels[i * width..(i + 1) * width].iter().map(|p| f64::from(*p) / 255.0));
        out_labels.push(y);
    }
    if out_labels.is_empty() {
        return Err(Error::DegenerateData(format!(
            "no images of digits {} or {}",
            digits.base, digits.target
        )));
    }
    Dataset::new(Tensor::matrix(out_labels.len(), width, data)?, out_labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filters_and_scales() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        write_idx_images(&img, 1, 2, &[0, 255, 10, 20, 255, 0]).unwrap();
        write_idx_labels(&lab, &[1, 3, 7]).unwrap();
        let ds = load_mnist_idx(&img, &lab, MnistDigits::default()).unwrap();
        assert_eq!(ds.labels, vec![0, 1]);
        assert_eq!(ds.x.data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn magic_and_truncation_checked() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        write_idx_labels(&lab, &[1]).unwrap();
        assert!(matches!(read_idx_images(&lab), Err(Error::Corrupt { .. })));
        write_idx_images(&img, 2, 2, &[1, 2, 3, 4]).unwrap();
        let mut bytes = std::fs::read(&img).unwrap();
        bytes.pop();
        std::fs::write(&img, bytes).unwrap();
        assert!(matches!(read_idx_images(&img), Err(Error::Corrupt { .. })));
    }
}
