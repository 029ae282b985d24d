//! Flat binary weight container: a small header followed by per-layer
//! shapes and raw little-endian 32-bit floats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

const MAGIC: &[u8; 4] = b"HBWT";
const VERSION: u32 = 1;

/// Write filter banks in order.
pub fn save_weights(path: impl AsRef<Path>, banks: &[&Tensor4<f32>]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(banks.len() as u32).to_le_bytes())?;
    for bank in banks {
        let (n, c, h, w) = bank.shape();
        for dim in [n, c, h, w] {
            out.write_all(&(dim as u32).to_le_bytes())?;
        }
        for &v in bank.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Read filter banks in the order they were written.
pub fn load_weights(path: impl AsRef<Path>) -> Result<Vec<Tensor4<f32>>> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad weight container magic".into()));
    }
    let mut buf4 = [0u8; 4];
    input.read_exact(&mut buf4)?;
    let version = u32::from_le_bytes(buf4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported weight container version {version}")));
    }
    input.read_exact(&mut buf4)?;
    let count = u32::from_le_bytes(buf4) as usize;
    let mut banks = Vec::with_capacity(count);
    for _ in 0..count {
        let mut dims = [0usize; 4];
        for d in &mut dims {
            input.read_exact(&mut buf4)?;
            *d = u32::from_le_bytes(buf4) as usize;
        }
        let len = dims.iter().product::<usize>();
        let mut data = vec![0f32; len];
        for v in &mut data {
            input.read_exact(&mut buf4)?;
            *v = f32::from_le_bytes(buf4);
        }
        banks.push(Tensor4::from_vec(dims[0], dims[1], dims[2], dims[3], data)?);
    }
    // trailing bytes indicate corruption
    let mut extra = [0u8; 1];
    if input.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after final weight bank".into()));
    }
    Ok(banks)
}
