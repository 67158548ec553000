//! IDX containers: a big-endian magic `0x0000 08 NN` (`08` = unsigned byte,
//! `NN` = number of dimensions), one big-endian `u32` per dimension, then the
//! raw bytes.

use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parses header and payload; returns the dimensions and the bytes.
fn parse(path: &Path, bytes: &[u8], expected: u32) -> Result<(Vec<usize>, Vec<u8>)> {
    let truncated = |context: String| Error::Truncated {
        path: path.to_path_buf(),
        context,
    };
    if bytes.len() < 4 {
        return Err(truncated(format!("{} bytes, no magic number", bytes.len())));
    }
    let magic = u32::from_be_bytes(bytes[..4].try_into().unwrap());
    if magic != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found: magic,
            expected,
        });
    }
    let ndim = (magic & 0xff) as usize;
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(truncated(format!("header needs {header} bytes, file has {}", bytes.len())));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let want: usize = dims.iter().product();
    let have = bytes.len() - header;
    if have < want {
        return Err(truncated(format!(
            "dimensions {dims:?} need {want} payload bytes, file has {have}"
        )));
    }
    if have > want {
        return Err(Error::Data(format!(
            "{}: {} trailing bytes after the payload",
            path.display(),
            have - want
        )));
    }
    Ok((dims, bytes[header..].to_vec()))
}

/// `[N, H, W, 1]` images scaled to `[0, 1]`.
pub fn read_idx_images(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let (dims, raw) = parse(path, &read_file(path)?, IDX_IMAGES_MAGIC)?;
    if dims.contains(&0) {
        return Err(Error::Data(format!("{}: empty image dimensions {dims:?}", path.display())));
    }
    Tensor::new(
        vec![dims[0], dims[1], dims[2], 1],
        raw.iter().map(|&b| b as f64 / 255.0).collect(),
    )
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let (_, raw) = parse(path, &read_file(path)?, IDX_LABELS_MAGIC)?;
    Ok(raw.into_iter().map(usize::from).collect())
}

/// Loads an image/label pair. `n_classes` defaults to `max label + 1`.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    n_classes: Option<usize>,
) -> Result<LabeledDataset> {
    let images = read_idx_images(&images_path)?;
    let labels = read_idx_labels(&labels_path)?;
    if images.shape()[0] != labels.len() {
        return Err(Error::CountMismatch {
            images: images.shape()[0],
            labels: labels.len(),
        });
    }
    let k = n_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    LabeledDataset::new(images, labels, LabeledDataset::numbered_classes(k), "idx")
}

fn write_file(path: &Path, magic: u32, dims: &[usize], payload: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(4 + 4 * dims.len() + payload.len());
    out.extend_from_slice(&magic.to_be_bytes());
    for &d in dims {
        let d = u32::try_from(d)
            .map_err(|_| Error::InvalidArgument(format!("dimension {d} does not fit in u32")))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(payload);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes single-channel images, quantizing `round(x * 255)` after clamping
/// to `[0, 1]`.
pub fn write_idx_images(path: impl AsRef<Path>, images: &Tensor) -> Result<()> {
    images.expect_rank(4, "IDX images")?;
    let s = images.shape();
    if s[3] != 1 {
        return Err(Error::InvalidArgument(format!(
            "IDX image files hold one channel, got {}",
            s[3]
        )));
    }
    let bytes: Vec<u8> = images
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    write_file(path.as_ref(), IDX_IMAGES_MAGIC, &s[..3], &bytes)
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let bytes = labels
        .iter()
        .map(|&y| {
            u8::try_from(y)
                .map_err(|_| Error::InvalidArgument(format!("label {y} does not fit in a byte")))
        })
        .collect::<Result<Vec<u8>>>()?;
    write_file(path.as_ref(), IDX_LABELS_MAGIC, &[labels.len()], &bytes)
}

/// Writes both files of a dataset.
pub fn write_idx(
    dataset: &LabeledDataset,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    write_idx_images(images_path, dataset.images())?;
    write_idx_labels(labels_path, dataset.labels())
}
