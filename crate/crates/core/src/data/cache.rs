//! Binary dataset cache.
//!
//! ```text
//! magic        b"XDDS"
//! version      u32 LE (= 1)
//! classes      u32 LE
//! dim          u32 LE
//! env_count    u32 LE
//! seed         u64 LE
//! label_noise  f64 LE
//! generator    u32 LE length + UTF-8 bytes
//! per environment:
//!   domain_id  u32 LE
//!   strength   f64 LE
//!   count      u32 LE
//!   labels     count x u32 LE
//!   spurious   count x u8
//!   x          count*dim x f64 LE, row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::data::{EnvDataset, Environment};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const DATASET_MAGIC: [u8; 4] = *b"XDDS";
pub const DATASET_VERSION: u32 = 1;

pub fn write_dataset<W: Write>(w: &mut W, ds: &EnvDataset) -> Result<()> {
    w.write_all(&DATASET_MAGIC)?;
    w.write_u32::<LE>(DATASET_VERSION)?;
    w.write_u32::<LE>(ds.classes as u32)?;
    w.write_u32::<LE>(ds.dim() as u32)?;
    w.write_u32::<LE>(ds.environments.len() as u32)?;
    w.write_u64::<LE>(ds.seed)?;
    w.write_f64::<LE>(ds.label_noise)?;
    w.write_u32::<LE>(ds.generator.len() as u32)?;
    w.write_all(ds.generator.as_bytes())?;
    for env in &ds.environments {
        w.write_u32::<LE>(env.domain_id as u32)?;
        w.write_f64::<LE>(env.spurious_strength)?;
        w.write_u32::<LE>(env.len() as u32)?;
        for &y in &env.y {
            w.write_u32::<LE>(y as u32)?;
        }
        w.write_all(&env.spurious)?;
        for &v in env.x.data() {
            w.write_f64::<LE>(v)?;
        }
    }
    Ok(())
}

fn eof(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Truncated("dataset cache ended early".into())
    } else {
        Error::Io(e)
    }
}

pub fn read_dataset<R: Read>(r: &mut R) -> Result<EnvDataset> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(eof)?;
    if magic != DATASET_MAGIC {
        return Err(Error::BadMagic {
            expected: u32::from_be_bytes(DATASET_MAGIC),
            found: u32::from_be_bytes(magic),
        });
    }
    let version = r.read_u32::<LE>().map_err(eof)?;
    if version != DATASET_VERSION {
        return Err(Error::Format(format!("unsupported dataset cache version {version}")));
    }
    let classes = r.read_u32::<LE>().map_err(eof)? as usize;
    let dim = r.read_u32::<LE>().map_err(eof)? as usize;
    let env_count = r.read_u32::<LE>().map_err(eof)? as usize;
    let seed = r.read_u64::<LE>().map_err(eof)?;
    let label_noise = r.read_f64::<LE>().map_err(eof)?;
    let name_len = r.read_u32::<LE>().map_err(eof)? as usize;
    if name_len > 4096 {
        return Err(Error::DimensionOverflow(format!("generator name of {name_len} bytes")));
    }
    let mut name = vec![0u8; name_len];
    r.read_exact(&mut name).map_err(eof)?;
    let generator = String::from_utf8(name).map_err(|_| Error::Format("generator name is not UTF-8".into()))?;
    let mut environments = Vec::with_capacity(env_count.min(1024));
    for _ in 0..env_count {
        let domain_id = r.read_u32::<LE>().map_err(eof)? as usize;
        let spurious_strength = r.read_f64::<LE>().map_err(eof)?;
        let count = r.read_u32::<LE>().map_err(eof)? as usize;
        let values = count
            .checked_mul(dim)
            .filter(|&n| n <= 1 << 31)
            .ok_or_else(|| Error::DimensionOverflow(format!("{count} examples of dimension {dim}")))?;
        let mut y = Vec::with_capacity(count);
        for _ in 0..count {
            y.push(r.read_u32::<LE>().map_err(eof)? as usize);
        }
        let mut spurious = vec![0u8; count];
        r.read_exact(&mut spurious).map_err(eof)?;
        let mut data = Vec::with_capacity(values);
        for _ in 0..values {
            data.push(r.read_f64::<LE>().map_err(eof)?);
        }
        environments.push(Environment {
            domain_id,
            x: Matrix::new(count, dim, data)?,
            y,
            spurious,
            spurious_strength,
        });
    }
    let ds = EnvDataset {
        environments,
        classes,
        generator,
        seed,
        label_noise,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn dataset_bytes(ds: &EnvDataset) -> Vec<u8> {
    let mut buf = Vec::new();
    write_dataset(&mut buf, ds).expect("writing to a Vec cannot fail");
    buf
}

pub fn save_dataset(path: &Path, ds: &EnvDataset) -> Result<()> {
    std::fs::write(path, dataset_bytes(ds))?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<EnvDataset> {
    let bytes = std::fs::read(path)?;
    read_dataset(&mut bytes.as_slice())
}
