//! IDX image/label files (the MNIST container format). Big-endian header:
//! magic, then one `u32` per dimension, then raw unsigned bytes.

use std::path::Path;

use crate::error::{MdaError, Result};
use crate::tensor::Tensor;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| MdaError::io(path, e))
}

/// Validates the magic and returns the dimension fields and payload.
fn parse_header(bytes: &[u8], magic: u32, dims: usize) -> Result<(Vec<usize>, &[u8])> {
    let header = 4 * (dims + 1);
    if bytes.len() < 4 {
        return Err(MdaError::Truncated {
            needed: header,
            found: bytes.len(),
        });
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    let found = word(0);
    if found != magic {
        return Err(MdaError::BadMagic { expected: magic, found });
    }
    if bytes.len() < header {
        return Err(MdaError::Truncated {
            needed: header,
            found: bytes.len(),
        });
    }
    let shape: Vec<usize> = (1..=dims).map(|i| word(i) as usize).collect();
    let needed = header + shape.iter().product::<usize>();
    if bytes.len() < needed {
        return Err(MdaError::Truncated {
            needed,
            found: bytes.len(),
        });
    }
    Ok((shape, &bytes[header..needed]))
}

/// Parses an image file into `[n, 1, h, w]` with pixels scaled to `[0, 1]`.
pub fn parse_images(bytes: &[u8]) -> Result<Tensor> {
    let (dims, payload) = parse_header(bytes, IMAGE_MAGIC, 3)?;
    let data = payload.iter().map(|&b| f64::from(b) / 255.0).collect();
    Tensor::new(vec![dims[0], 1, dims[1], dims[2]], data)
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let (_, payload) = parse_header(bytes, LABEL_MAGIC, 1)?;
    Ok(payload.iter().map(|&b| usize::from(b)).collect())
}

/// Loads a matching image/label file pair.
pub fn idx_load(images_path: &Path, labels_path: &Path) -> Result<(Tensor, Vec<usize>)> {
    let images = parse_images(&read(images_path)?)?;
    let labels = parse_labels(&read(labels_path)?)?;
    if images.batch() != labels.len() {
        return Err(MdaError::CountMismatch {
            images: images.batch(),
            labels: labels.len(),
        });
    }
    Ok((images, labels))
}

/// Encodes `[n, 1, h, w]` or `[n, h, w]` images whose values are multiples of
/// `1/255` in `[0, 1]` (anything else is rounded).
pub fn encode_images(images: &Tensor) -> Result<Vec<u8>> {
    let (n, h, w) = match images.shape() {
        &[n, 1, h, w] | &[n, h, w] => (n, h, w),
        s => return Err(MdaError::shape("encode_images", "[n, 1, h, w]", format!("{s:?}"))),
    };
    let mut out = Vec::with_capacity(16 + images.len());
    for v in [IMAGE_MAGIC, n as u32, h as u32, w as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(images.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

pub fn encode_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        out.push(u8::try_from(l).map_err(|_| MdaError::LabelOutOfRange { label: l, classes: 256 })?);
    }
    Ok(out)
}

/// Writes an image/label file pair readable by [`idx_load`].
pub fn idx_write(images_path: &Path, labels_path: &Path, images: &Tensor, labels: &[usize]) -> Result<()> {
    if images.batch() != labels.len() {
        return Err(MdaError::CountMismatch {
            images: images.batch(),
            labels: labels.len(),
        });
    }
    std::fs::write(images_path, encode_images(images)?).map_err(|e| MdaError::io(images_path, e))?;
    std::fs::write(labels_path, encode_labels(labels)?).map_err(|e| MdaError::io(labels_path, e))
}
