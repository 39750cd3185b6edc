//! Middlebury `.flo` files: `f32` tag 202021.25 (`"PIEH"`), `i32` width,
//! `i32` height, then row-major interleaved `(dx, dy)` `f32` pairs, all
//! little-endian.

use std::path::Path;

use super::{FlowError, FlowField};

pub const FLO_MAGIC: f32 = 202021.25;

pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + 8 * flow.dx.len());
    buf.extend(FLO_MAGIC.to_le_bytes());
    buf.extend((flow.width as i32).to_le_bytes());
    buf.extend((flow.height as i32).to_le_bytes());
    for (x, y) in flow.dx.iter().zip(&flow.dy) {
        buf.extend(x.to_le_bytes());
        buf.extend(y.to_le_bytes());
    }
    buf
}

pub fn decode_flo(bytes: &[u8]) -> Result<FlowField, String> {
    if bytes.len() < 12 {
        return Err("file shorter than header".into());
    }
    let word = |i: usize| <[u8; 4]>::try_from(&bytes[i..i + 4]).unwrap();
    if f32::from_le_bytes(word(0)) != FLO_MAGIC {
        return Err("missing PIEH tag".into());
    }
    let w = i32::from_le_bytes(word(4));
    let h = i32::from_le_bytes(word(8));
    if w <= 0 || h <= 0 {
        return Err(format!("invalid dimensions {w}x{h}"));
    }
    let (w, h) = (w as usize, h as usize);
    if bytes.len() != 12 + 8 * w * h {
        return Err(format!("expected {} bytes for {w}x{h}, found {}", 12 + 8 * w * h, bytes.len()));
    }
    let mut flow = FlowField::zeros(w, h);
    for i in 0..w * h {
        flow.dx[i] = f32::from_le_bytes(word(12 + 8 * i));
        flow.dy[i] = f32::from_le_bytes(word(16 + 8 * i));
    }
    Ok(flow)
}

pub fn write_flo(path: &Path, flow: &FlowField) -> Result<(), FlowError> {
    std::fs::write(path, encode_flo(flow)).map_err(|source| FlowError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_flo(path: &Path) -> Result<FlowField, FlowError> {
    let p = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|source| FlowError::Io { path: p.clone(), source })?;
    decode_flo(&bytes).map_err(|msg| FlowError::Format { path: p, msg })
}
