//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        b"XDCK"
//! version      u32   (= 1)
//! scalar_bits  u8    (32 or 64; values below are always stored as f64)
//! group_size   u32
//! lipschitz    f64   declared encoder Lipschitz constant
//! input_map    u8 tag (0 = pad/truncate, 1 = pool2x2), then two u32
//! layers       u32 count, then per layer:
//!                kind u8 (0 = cayley, 1 = dense), matrix, bias matrix
//! classifier   matrix (weight), matrix (bias)
//! matrix       u32 rows, u32 cols, rows*cols f64
//! ```
//!
//! Every stored value round-trips bit-exactly for both `f32` and `f64`.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::nets::layers::{DenseLayer, EncoderLayer, InputMap, OrthLinear, SkewParam};
use crate::nets::model::Model;
use crate::numerics::Matrix;
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"XDCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn write_matrix<T: Scalar, W: Write>(w: &mut W, m: &Matrix<T>) -> Result<()> {
    w.write_u32::<LE>(m.rows() as u32)?;
    w.write_u32::<LE>(m.cols() as u32)?;
    for &v in m.data() {
        w.write_f64::<LE>(v.to_f64c())?;
    }
    Ok(())
}

fn read_matrix<T: Scalar, R: Read>(r: &mut R) -> Result<Matrix<T>> {
    let rows = r.read_u32::<LE>()? as usize;
    let cols = r.read_u32::<LE>()? as usize;
    let len = rows
        .checked_mul(cols)
        .filter(|&n| n <= 1 << 28)
        .ok_or_else(|| Error::DimensionOverflow(format!("{rows}x{cols} matrix in checkpoint")))?;
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        data.push(T::lit(r.read_f64::<LE>()?));
    }
    Matrix::new(rows, cols, data)
}

pub fn write_checkpoint<T: Scalar, W: Write>(w: &mut W, model: &Model<T>) -> Result<()> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_u32::<LE>(CHECKPOINT_VERSION)?;
    w.write_u8((std::mem::size_of::<T>() * 8) as u8)?;
    w.write_u32::<LE>(model.group_size as u32)?;
    w.write_f64::<LE>(model.declared_lipschitz)?;
    match model.input_map {
        InputMap::PadTruncate { in_dim, out_dim } => {
            w.write_u8(0)?;
            w.write_u32::<LE>(in_dim as u32)?;
            w.write_u32::<LE>(out_dim as u32)?;
        }
        InputMap::Pool2x2 { channels, side } => {
            w.write_u8(1)?;
            w.write_u32::<LE>(channels as u32)?;
            w.write_u32::<LE>(side as u32)?;
        }
    }
    w.write_u32::<LE>(model.encoder.len() as u32)?;
    for layer in &model.encoder {
        match layer {
            EncoderLayer::Orthogonal(l) => {
                w.write_u8(0)?;
                write_matrix(w, &l.skew.raw)?;
                write_matrix(w, &l.bias)?;
            }
            EncoderLayer::Dense(l) => {
                w.write_u8(1)?;
                write_matrix(w, &l.weight)?;
                write_matrix(w, &l.bias)?;
            }
        }
    }
    write_matrix(w, &model.classifier.weight)?;
    write_matrix(w, &model.classifier.bias)?;
    Ok(())
}

pub fn read_checkpoint<T: Scalar, R: Read>(r: &mut R) -> Result<Model<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: u32::from_be_bytes(CHECKPOINT_MAGIC),
            found: u32::from_be_bytes(magic),
        });
    }
    let version = r.read_u32::<LE>().map_err(truncated)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let _scalar_bits = r.read_u8().map_err(truncated)?;
    let group_size = r.read_u32::<LE>().map_err(truncated)? as usize;
    let declared_lipschitz = r.read_f64::<LE>().map_err(truncated)?;
    let tag = r.read_u8().map_err(truncated)?;
    let a = r.read_u32::<LE>().map_err(truncated)? as usize;
    let b = r.read_u32::<LE>().map_err(truncated)? as usize;
    let input_map = match tag {
        0 => InputMap::PadTruncate { in_dim: a, out_dim: b },
        1 => InputMap::Pool2x2 { channels: a, side: b },
        other => return Err(Error::Format(format!("unknown input map tag {other}"))),
    };
    let count = r.read_u32::<LE>().map_err(truncated)? as usize;
    let mut encoder = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let kind = r.read_u8().map_err(truncated)?;
        let weight = read_matrix(r).map_err(truncated_err)?;
        let bias = read_matrix(r).map_err(truncated_err)?;
        encoder.push(match kind {
            0 => EncoderLayer::Orthogonal(OrthLinear {
                skew: SkewParam::new(weight)?,
                bias,
            }),
            1 => EncoderLayer::Dense(DenseLayer::new(weight, bias)?),
            other => return Err(Error::Format(format!("unknown layer kind {other}"))),
        });
    }
    let weight = read_matrix(r).map_err(truncated_err)?;
    let bias = read_matrix(r).map_err(truncated_err)?;
    let model = Model {
        input_map,
        encoder,
        group_size,
        classifier: DenseLayer::new(weight, bias)?,
        declared_lipschitz,
    };
    model.validate()?;
    Ok(model)
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Truncated("checkpoint ended early".into())
    } else {
        Error::Io(e)
    }
}

fn truncated_err(e: Error) -> Error {
    match e {
        Error::Io(io) => truncated(io),
        other => other,
    }
}

pub fn checkpoint_bytes<T: Scalar>(model: &Model<T>) -> Vec<u8> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, model).expect("writing to a Vec cannot fail");
    buf
}

pub fn save_checkpoint<T: Scalar>(path: &Path, model: &Model<T>) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(model))?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Model<T>> {
    let bytes = std::fs::read(path)?;
    read_checkpoint(&mut bytes.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{LayerKind, ModelSpec};
    use crate::numerics::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        for kind in [LayerKind::Orthogonal, LayerKind::Dense] {
            let spec = ModelSpec::square(6, 2, 3, kind);
            let model = Model::<f64>::init(&spec, &mut Rng::seed(1)).unwrap();
            let bytes = checkpoint_bytes(&model);
            let back: Model<f64> = read_checkpoint(&mut bytes.as_slice()).unwrap();
            assert_eq!(back, model);
            assert_eq!(checkpoint_bytes(&back), bytes);
        }
        let spec = ModelSpec::square(4, 1, 2, LayerKind::Orthogonal);
        let model = Model::<f32>::init(&spec, &mut Rng::seed(2)).unwrap();
        let back: Model<f32> = read_checkpoint(&mut checkpoint_bytes(&model).as_slice()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let spec = ModelSpec::square(4, 1, 2, LayerKind::Orthogonal);
        let model = Model::<f64>::init(&spec, &mut Rng::seed(2)).unwrap();
        let mut bytes = checkpoint_bytes(&model);
        let short = &bytes[..bytes.len() - 3];
        assert!(matches!(
            read_checkpoint::<f64, _>(&mut &short[..]),
            Err(Error::Truncated(_))
        ));
        bytes[0] = b'Z';
        assert!(matches!(
            read_checkpoint::<f64, _>(&mut bytes.as_slice()),
            Err(Error::BadMagic { .. })
        ));
    }
}
