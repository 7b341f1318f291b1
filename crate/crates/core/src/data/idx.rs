//! IDX binary tensors (the MNIST file format).
//!
//! Layout: a big-endian magic `0x0000_TTDD` (`TT` element type, `DD` number
//! of dimensions), one big-endian `u32` per dimension, then the row-major
//! payload. Only unsigned-byte (`0x08`) label vectors and image stacks are
//! supported.

use std::path::Path;

use super::Dataset;
use crate::error::{Result, SrdaError};
use crate::numeric::Matrix;

pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const IMAGES_MAGIC: u32 = 0x0000_0803;

const UNSIGNED_BYTE: u8 = 0x08;
/// Element types defined by the format that this reader does not decode.
const OTHER_IDX_TYPES: [u8; 5] = [0x09, 0x0b, 0x0c, 0x0d, 0x0e];

#[derive(Clone, Debug, PartialEq)]
pub enum IdxData {
    /// `n × (rows·cols)`, pixel values scaled to `[0, 1]`.
    Images { images: Matrix, rows: usize, cols: usize },
    Labels(Vec<usize>),
}

fn truncated(declared: usize, actual: usize) -> SrdaError {
    SrdaError::TruncatedPayload { declared, actual }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    if bytes.len() < 4 {
        return Err(truncated(4, bytes.len()));
    }
    let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let (elem, ndims) = (bytes[2], bytes[3]);
    if bytes[0] != 0 || bytes[1] != 0 || !(ndims == 1 || ndims == 3) {
        return Err(SrdaError::BadMagic(magic));
    }
    if elem != UNSIGNED_BYTE {
        return Err(if OTHER_IDX_TYPES.contains(&elem) { SrdaError::UnsupportedType(elem) } else { SrdaError::BadMagic(magic) });
    }
    let header = 4 + 4 * ndims as usize;
    if bytes.len() < header {
        return Err(truncated(header, bytes.len()));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let payload_len: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() < payload_len {
        return Err(truncated(payload_len, payload.len()));
    }
    if payload.len() > payload_len {
        return Err(SrdaError::InvalidInput(format!(
            "IDX payload has {} trailing bytes",
            payload.len() - payload_len
        )));
    }
    if ndims == 1 {
        Ok(IdxData::Labels(payload.iter().map(|&b| b as usize).collect()))
    } else {
        let (n, rows, cols) = (dims[0], dims[1], dims[2]);
        let data = payload.iter().map(|&b| f64::from(b) / 255.0).collect();
        Ok(IdxData::Images { images: Matrix::from_vec(n, rows * cols, data)?, rows, cols })
    }
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn encode_idx_images(n: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), n * rows * cols, "pixel count does not match dims");
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for d in [n, rows, cols] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

/// Reads an image file and its label file into a labeled dataset.
pub fn load_idx_dataset(images: impl AsRef<Path>, labels: impl AsRef<Path>, name: &str) -> Result<Dataset> {
    let images = match parse_idx(&std::fs::read(images)?)? {
        IdxData::Images { images, .. } => images,
        IdxData::Labels(_) => return Err(SrdaError::InvalidInput("expected an IDX image file, found labels".into())),
    };
    let labels = match parse_idx(&std::fs::read(labels)?)? {
        IdxData::Labels(l) => l,
        IdxData::Images { .. } => return Err(SrdaError::InvalidInput("expected an IDX label file, found images".into())),
    };
    let classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
    Dataset::new(name, images, Some(labels), Some(classes))
}
