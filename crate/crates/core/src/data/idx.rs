//! IDX reader (the MNIST distribution format).
//!
//! Big-endian: a 32-bit magic whose low byte is the number of dimensions and
//! whose third byte is the element type (0x08 = unsigned byte), then one
//! 32-bit size per dimension, then the raw elements.

use std::path::Path;

use byteorder::{BigEndian, ByteOrder};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Cap on the element count of a single file, well above full MNIST.
const MAX_ELEMENTS: usize = 1 << 31;

#[derive(Clone, Debug, PartialEq)]
pub enum IdxData {
    /// One row per image, pixel values scaled to [0, 1].
    Images {
        rows: usize,
        cols: usize,
        pixels: Matrix<f64>,
    },
    Labels(Vec<u8>),
}

fn header(bytes: &[u8], dims: usize) -> Result<Vec<usize>> {
    let need = 4 + 4 * dims;
    if bytes.len() < need {
        return Err(Error::Truncated(format!(
            "header needs {need} bytes, file has {}",
            bytes.len()
        )));
    }
    Ok((0..dims)
        .map(|i| BigEndian::read_u32(&bytes[4 + 4 * i..8 + 4 * i]) as usize)
        .collect())
}

fn body<'a>(bytes: &'a [u8], dims: &[usize]) -> Result<&'a [u8]> {
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n <= MAX_ELEMENTS)
        .ok_or_else(|| Error::DimensionOverflow(format!("dimensions {dims:?}")))?;
    let start = 4 + 4 * dims.len();
    let available = bytes.len() - start;
    if available < count {
        return Err(Error::Truncated(format!(
            "expected {count} data bytes, found {available}"
        )));
    }
    Ok(&bytes[start..start + count])
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    if bytes.len() < 4 {
        return Err(Error::Truncated("missing magic number".into()));
    }
    match BigEndian::read_u32(&bytes[..4]) {
        IMAGES_MAGIC => parse_images(bytes),
        LABELS_MAGIC => parse_labels(bytes),
        found => Err(Error::BadMagic {
            expected: IMAGES_MAGIC,
            found,
        }),
    }
}

fn parse_images(bytes: &[u8]) -> Result<IdxData> {
    let dims = header(bytes, 3)?;
    let raw = body(bytes, &dims)?;
    let (n, rows, cols) = (dims[0], dims[1], dims[2]);
    let pixels = Matrix::new(n, rows * cols, raw.iter().map(|&b| b as f64 / 255.0).collect())?;
    Ok(IdxData::Images { rows, cols, pixels })
}

fn parse_labels(bytes: &[u8]) -> Result<IdxData> {
    let dims = header(bytes, 1)?;
    Ok(IdxData::Labels(body(bytes, &dims)?.to_vec()))
}

pub fn read_idx(path: &Path) -> Result<IdxData> {
    parse_idx(&std::fs::read(path)?)
}

/// Reads an image file; any other magic is rejected.
pub fn read_idx_images(path: &Path) -> Result<Matrix<f64>> {
    let bytes = std::fs::read(path)?;
    expect_magic(&bytes, IMAGES_MAGIC)?;
    match parse_images(&bytes)? {
        IdxData::Images { pixels, .. } => Ok(pixels),
        IdxData::Labels(_) => unreachable!(),
    }
}

/// Reads a label file; any other magic is rejected.
pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path)?;
    expect_magic(&bytes, LABELS_MAGIC)?;
    match parse_labels(&bytes)? {
        IdxData::Labels(l) => Ok(l),
        IdxData::Images { .. } => unreachable!(),
    }
}

fn expect_magic(bytes: &[u8], expected: u32) -> Result<()> {
    if bytes.len() < 4 {
        return Err(Error::Truncated("missing magic number".into()));
    }
    let found = BigEndian::read_u32(&bytes[..4]);
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}
