//! Binary parameter checkpoints.
//!
//! Layout (little-endian): `b"TCH1"`, `u32` entry count, then per entry a
//! `u16` name length, the UTF-8 name, a `u8` rank, `rank` × `u32` dims and
//! the `f32` values in row-major order. Entries follow the set's
//! lexicographic order, so equal sets serialize to equal bytes.

use std::io::{Read, Write};

use super::params::ParameterSet;
use super::real::Real;
use super::tensor::Tensor;
use super::EngineError;

pub const MAGIC: &[u8; 4] = b"TCH1";

pub fn write_checkpoint<T: Real, W: Write>(params: &ParameterSet<T>, mut out: W) -> Result<(), EngineError> {
    out.write_all(MAGIC)?;
    let count = u32::try_from(params.len()).map_err(|_| EngineError::format("too many parameters"))?;
    out.write_all(&count.to_le_bytes())?;
    for (name, tensor) in params.iter() {
        let len = u16::try_from(name.len()).map_err(|_| EngineError::format(format!("name too long: {name}")))?;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        let rank = u8::try_from(tensor.rank()).map_err(|_| EngineError::format("rank exceeds 255"))?;
        out.write_all(&[rank])?;
        for &d in tensor.shape() {
            let d = u32::try_from(d).map_err(|_| EngineError::format("dimension exceeds u32"))?;
            out.write_all(&d.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(tensor.len() * 4);
        for v in tensor.values() {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

fn read_exact<R: Read, const N: usize>(input: &mut R) -> Result<[u8; N], EngineError> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => EngineError::format("truncated checkpoint"),
        _ => EngineError::Io(e),
    })?;
    Ok(buf)
}

pub fn read_checkpoint<T: Real, R: Read>(mut input: R) -> Result<ParameterSet<T>, EngineError> {
    let magic: [u8; 4] = read_exact(&mut input)?;
    if &magic != MAGIC {
        return Err(EngineError::format(format!("bad checkpoint magic {magic:?}")));
    }
    let count = u32::from_le_bytes(read_exact(&mut input)?);
    let mut params = ParameterSet::new();
    for _ in 0..count {
        let len = u16::from_le_bytes(read_exact(&mut input)?) as usize;
        let mut name = vec![0u8; len];
        input
            .read_exact(&mut name)
            .map_err(|_| EngineError::format("truncated parameter name"))?;
        let name = String::from_utf8(name).map_err(|_| EngineError::format("parameter name is not UTF-8"))?;
        let [rank] = read_exact::<_, 1>(&mut input)?;
        let mut shape = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(read_exact(&mut input)?) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut raw = vec![0u8; numel * 4];
        input
            .read_exact(&mut raw)
            .map_err(|_| EngineError::format(format!("truncated values for {name}")))?;
        let values = raw
            .chunks_exact(4)
            .map(|b| T::from_f64_lossy(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        params.insert(name, Tensor::new(&shape, values)?)?;
    }
    Ok(params)
}
