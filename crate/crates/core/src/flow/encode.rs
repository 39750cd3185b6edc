use std::borrow::Borrow;
use std::io::{Read, Write};
use std::path::Path;

use image::{Rgb, RgbImage};

use crate::engine::Tensor;

use super::{FlowError, FlowField};

fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Encodes a flow field as an 8-bit image: channel 0 is `dx` and channel 1
/// is `dy`, each mapped from `[-max_mag, max_mag]` onto `[0, 255]`;
/// channel 2 is the magnitude mapped from `[0, max_mag]`. Values outside the
/// range are clamped.
pub fn flow_to_image(flow: &FlowField, max_mag: f64) -> RgbImage {
    assert!(max_mag > 0.0, "max_mag must be positive");
    let mut img = RgbImage::new(flow.width as u32, flow.height as u32);
    for (i, px) in img.pixels_mut().enumerate() {
        let dx = flow.dx[i] as f64;
        let dy = flow.dy[i] as f64;
        *px = Rgb([
            quantize((dx + max_mag) / (2.0 * max_mag) * 255.0),
            quantize((dy + max_mag) / (2.0 * max_mag) * 255.0),
            quantize(dx.hypot(dy) / max_mag * 255.0),
        ]);
    }
    img
}

/// Inverse of the `dx`/`dy` channels of [`flow_to_image`], up to
/// quantization.
pub fn image_to_flow(image: &RgbImage, max_mag: f64) -> FlowField {
    let (w, h) = image.dimensions();
    let decode = |v: u8| (v as f64 / 255.0 * 2.0 - 1.0) * max_mag;
    FlowField {
        width: w as usize,
        height: h as usize,
        dx: image.pixels().map(|p| decode(p[0]) as f32).collect(),
        dy: image.pixels().map(|p| decode(p[1]) as f32).collect(),
    }
}

/// Per-pixel, per-channel arithmetic mean as a `[3, H, W]` tensor. Images
/// are consumed one at a time, so the stream may be lazily decoded.
pub fn compute_flow_mean_image<I, B>(images: I) -> Result<Tensor<f32>, FlowError>
where
    I: IntoIterator<Item = B>,
    B: Borrow<RgbImage>,
{
    let mut sum: Vec<f64> = Vec::new();
    let mut dims = None;
    let mut count = 0usize;
    for img in images {
        let img = img.borrow();
        let (w, h) = img.dimensions();
        match dims {
            None => {
                dims = Some((w, h));
                sum = vec![0.0; 3 * (w * h) as usize];
            }
            Some(d) if d != (w, h) => {
                return Err(FlowError::DimensionMismatch(
                    vec![d.1 as usize, d.0 as usize],
                    vec![h as usize, w as usize],
                ))
            }
            _ => {}
        }
        let plane = (w * h) as usize;
        for (i, p) in img.pixels().enumerate() {
            for c in 0..3 {
                sum[c * plane + i] += p[c] as f64;
            }
        }
        count += 1;
    }
    let (w, h) = dims.ok_or(FlowError::EmptyStream)?;
    let values = sum.into_iter().map(|s| (s / count as f64) as f32).collect();
    Ok(Tensor::new(&[3, h as usize, w as usize], values).expect("non-empty image"))
}

const MEAN_MAGIC: &[u8; 4] = b"FMI1";

/// Stores a `[3, H, W]` mean image: `b"FMI1"`, `u32` width, `u32` height,
/// then channel-major little-endian `f32` values.
pub fn write_mean_image(path: &Path, mean: &Tensor<f32>) -> Result<(), FlowError> {
    let io = |source| FlowError::Io {
        path: path.display().to_string(),
        source,
    };
    let &[3, h, w] = mean.shape() else {
        return Err(FlowError::InvalidParams(format!("mean image must be [3,H,W], got {:?}", mean.shape())));
    };
    let mut buf = MEAN_MAGIC.to_vec();
    buf.extend((w as u32).to_le_bytes());
    buf.extend((h as u32).to_le_bytes());
    mean.values().iter().for_each(|v| buf.extend(v.to_le_bytes()));
    std::fs::File::create(path).and_then(|mut f| f.write_all(&buf)).map_err(io)
}

pub fn read_mean_image(path: &Path) -> Result<Tensor<f32>, FlowError> {
    let p = path.display().to_string();
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|source| FlowError::Io { path: p.clone(), source })?;
    let bad = |msg: &str| FlowError::Format {
        path: p.clone(),
        msg: msg.to_string(),
    };
    if buf.len() < 12 || &buf[..4] != MEAN_MAGIC {
        return Err(bad("not a flow mean image"));
    }
    let w = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    if buf.len() != 12 + 12 * w * h || w == 0 || h == 0 {
        return Err(bad("length does not match header"));
    }
    let values = buf[12..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(Tensor::new(&[3, h, w], values).expect("checked length"))
}
