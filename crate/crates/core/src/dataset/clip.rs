use std::collections::BTreeMap;
use std::path::Path;

use image::RgbImage;
use rayon::prelude::*;

use crate::engine::Tensor;

use super::{image_path, ClassLabel, ClipDescriptor, DatasetError, Modality, VideoRecord, CLIP_LEN};

/// Bilinear resize (pixel centers aligned) to a `[3, h, w]` channel-major
/// buffer scaled to `0..1`. Resized pixels are rounded to 8 bits first, as
/// an image resize would.
pub fn bilinear_resize(img: &RgbImage, w: usize, h: usize) -> Vec<f32> {
    to_unit(&resize_u8(img, w, h))
}

fn to_unit(px: &[u8]) -> Vec<f32> {
    px.iter().map(|&v| v as f32 / 255.0).collect()
}

fn resize_u8(img: &RgbImage, w: usize, h: usize) -> Vec<u8> {
    let (sw, sh) = (img.width() as usize, img.height() as usize);
    let raw = img.as_raw();
    let mut out = vec![0u8; 3 * w * h];
    let scale_x = sw as f64 / w as f64;
    let scale_y = sh as f64 / h as f64;
    for y in 0..h {
        let fy = ((y as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let ty = fy - y0 as f64;
        for x in 0..w {
            let fx = ((x as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (sw - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let tx = fx - x0 as f64;
            for c in 0..3 {
                let at = |xx: usize, yy: usize| raw[(yy * sw + xx) * 3 + c] as f64;
                let top = at(x0, y0) * (1.0 - tx) + at(x1, y0) * tx;
                let bottom = at(x0, y1) * (1.0 - tx) + at(x1, y1) * tx;
                out[(c * h + y) * w + x] = (top * (1.0 - ty) + bottom * ty).round() as u8;
            }
        }
    }
    out
}

/// Decodes one image file and resizes it to `[3, h, w]` in `0..1`.
pub fn load_frame(path: &Path, w: usize, h: usize) -> Result<Vec<f32>, DatasetError> {
    load_frame_u8(path, w, h).map(|px| to_unit(&px))
}

fn load_frame_u8(path: &Path, w: usize, h: usize) -> Result<Vec<u8>, DatasetError> {
    if !path.is_file() {
        return Err(DatasetError::Missing(path.display().to_string()));
    }
    let img = image::open(path)
        .map_err(|e| DatasetError::Decode {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?
        .to_rgb8();
    Ok(resize_u8(&img, w, h))
}

/// Mean images subtracted from network inputs, in `0..1` units.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    /// Per-channel scalar RGB mean over the train split.
    pub rgb_mean: [f32; 3],
    /// Per-pixel `[3, H, W]` flow-image mean at the training resolution.
    pub flow_mean: Option<Tensor<f32>>,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            rgb_mean: [0.0; 3],
            flow_mean: None,
        }
    }
}

impl Normalization {
    /// Resizes a source-resolution flow mean image (0..255) to `w × h`.
    pub fn with_flow_mean(mut self, mean: &Tensor<f32>, w: usize, h: usize) -> Self {
        let &[3, sh, sw] = mean.shape() else {
            panic!("flow mean must be [3,H,W]");
        };
        let plane = sh * sw;
        // Resized in floating point so the mean is not quantized.
        let src: Vec<f64> = mean.values().iter().map(|&v| v as f64).collect();
        let mut out = vec![0.0f32; 3 * w * h];
        for c in 0..3 {
            let chan = &src[c * plane..(c + 1) * plane];
            for y in 0..h {
                for x in 0..w {
                    let fx = ((x as f64 + 0.5) * sw as f64 / w as f64 - 0.5).clamp(0.0, (sw - 1) as f64);
                    let fy = ((y as f64 + 0.5) * sh as f64 / h as f64 - 0.5).clamp(0.0, (sh - 1) as f64);
                    let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
                    let (x1, y1) = ((x0 + 1).min(sw - 1), (y0 + 1).min(sh - 1));
                    let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
                    let top = chan[y0 * sw + x0] * (1.0 - tx) + chan[y0 * sw + x1] * tx;
                    let bottom = chan[y1 * sw + x0] * (1.0 - tx) + chan[y1 * sw + x1] * tx;
                    out[(c * h + y) * w + x] = ((top * (1.0 - ty) + bottom * ty) / 255.0) as f32;
                }
            }
        }
        self.flow_mean = Some(Tensor::new(&[3, h, w], out).expect("non-empty"));
        self
    }

    /// Subtracts this modality's mean from a `[3, H, W]` frame in place.
    pub fn apply(&self, modality: Modality, frame: &mut [f32]) {
        let plane = frame.len() / 3;
        match modality {
            Modality::Rgb => {
                for c in 0..3 {
                    frame[c * plane..(c + 1) * plane]
                        .iter_mut()
                        .for_each(|v| *v -= self.rgb_mean[c]);
                }
            }
            Modality::Flow => {
                if let Some(mean) = &self.flow_mean {
                    frame.iter_mut().zip(mean.values()).for_each(|(v, m)| *v -= m);
                }
            }
            Modality::Pose => {}
        }
    }
}

/// A 16-frame aligned bundle of modality tensors, each `[3, 16, H, W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub video_id: String,
    pub start_frame: usize,
    pub label: ClassLabel,
    pub rgb: Option<Tensor<f32>>,
    pub flow: Option<Tensor<f32>>,
    pub pose: Option<Tensor<f32>>,
}

impl Clip {
    pub fn modality(&self, m: Modality) -> Option<&Tensor<f32>> {
        match m {
            Modality::Rgb => self.rgb.as_ref(),
            Modality::Flow => self.flow.as_ref(),
            Modality::Pose => self.pose.as_ref(),
        }
    }

    fn slot(&mut self, m: Modality) -> &mut Option<Tensor<f32>> {
        match m {
            Modality::Rgb => &mut self.rgb,
            Modality::Flow => &mut self.flow,
            Modality::Pose => &mut self.pose,
        }
    }

    /// Spatial size `(h, w)` of the loaded modalities.
    pub fn frame_dims(&self) -> Option<(usize, usize)> {
        Modality::ALL
            .iter()
            .find_map(|&m| self.modality(m))
            .map(|t| (t.shape()[2], t.shape()[3]))
    }

    /// One time step of a modality as a `[3, H, W]` buffer.
    pub fn frame(&self, m: Modality, t: usize) -> Option<Vec<f32>> {
        let tensor = self.modality(m)?;
        let &[c, len, h, w] = tensor.shape() else { return None };
        let plane = h * w;
        let mut out = Vec::with_capacity(c * plane);
        for ch in 0..c {
            let at = (ch * len + t) * plane;
            out.extend_from_slice(&tensor.values()[at..at + plane]);
        }
        Some(out)
    }
}

/// Stacks `[3, H, W]` frames into a `[3, T, H, W]` tensor.
fn stack_frames(frames: &[Vec<f32>], h: usize, w: usize) -> Tensor<f32> {
    let plane = h * w;
    let t = frames.len();
    let mut out = vec![0.0f32; 3 * t * plane];
    for (ti, f) in frames.iter().enumerate() {
        for c in 0..3 {
            out[(c * t + ti) * plane..(c * t + ti + 1) * plane].copy_from_slice(&f[c * plane..(c + 1) * plane]);
        }
    }
    Tensor::new(&[3, t, h, w], out).expect("non-empty clip")
}

fn check_flow_offset(desc: &ClipDescriptor, modalities: &[Modality]) -> Result<(), DatasetError> {
    if modalities.contains(&Modality::Flow) && (desc.gap_k == 0 || desc.start_frame < desc.gap_k) {
        return Err(DatasetError::Invalid(format!(
            "clip {}@{} carries flow but starts before its gap offset {}",
            desc.video_id, desc.start_frame, desc.gap_k
        )));
    }
    Ok(())
}

/// Reads the requested modalities of one chunk straight from disk.
pub fn load_clip(
    desc: &ClipDescriptor,
    modalities: &[Modality],
    (h, w): (usize, usize),
    norm: &Normalization,
) -> Result<Clip, DatasetError> {
    check_flow_offset(desc, modalities)?;
    let mut clip = Clip {
        video_id: desc.video_id.clone(),
        start_frame: desc.start_frame,
        label: desc.label.clone(),
        rgb: None,
        flow: None,
        pose: None,
    };
    for &m in modalities {
        let frames = (desc.start_frame..desc.start_frame + CLIP_LEN)
            .map(|i| {
                let mut f = load_frame(&image_path(&desc.dir, m, i), w, h)?;
                norm.apply(m, &mut f);
                Ok(f)
            })
            .collect::<Result<Vec<_>, DatasetError>>()?;
        *clip.slot(m) = Some(stack_frames(&frames, h, w));
    }
    Ok(clip)
}

/// Decoded, resized (un-normalized) frames of many videos kept in memory.
#[derive(Debug, Default)]
pub struct FrameCache {
    size: (usize, usize),
    frames: BTreeMap<(String, Modality), Vec<Option<Vec<u8>>>>,
}

impl FrameCache {
    /// Loads every frame of `modalities` for `records`; flow frames below
    /// `gap_k` do not exist and are left empty. Videos decode in parallel.
    pub fn load(
        records: &[VideoRecord],
        modalities: &[Modality],
        (h, w): (usize, usize),
        gap_k: usize,
    ) -> Result<Self, DatasetError> {
        let jobs: Vec<(usize, Modality)> = (0..records.len())
            .flat_map(|i| modalities.iter().map(move |&m| (i, m)))
            .collect();
        let loaded = jobs
            .par_iter()
            .map(|&(i, m)| {
                let r = &records[i];
                let first = if m == Modality::Flow { gap_k } else { 0 };
                let frames = (0..r.frame_count)
                    .map(|f| {
                        if f < first {
                            Ok(None)
                        } else {
                            load_frame_u8(&r.frame_path(m, f), w, h).map(Some)
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(((r.video_id.clone(), m), frames))
            })
            .collect::<Result<Vec<_>, DatasetError>>()?;
        Ok(Self {
            size: (h, w),
            frames: loaded.into_iter().collect(),
        })
    }

    pub fn size(&self) -> (usize, usize) {
        self.size
    }

    /// Resized 8-bit pixels of one frame, `[3, H, W]`.
    pub fn frame(&self, video_id: &str, m: Modality, index: usize) -> Option<&[u8]> {
        self.frames
            .get(&(video_id.to_string(), m))
            .and_then(|v| v.get(index))
            .and_then(|f| f.as_deref())
    }

    pub fn clip(&self, desc: &ClipDescriptor, modalities: &[Modality], norm: &Normalization) -> Result<Clip, DatasetError> {
        check_flow_offset(desc, modalities)?;
        let (h, w) = self.size;
        let mut clip = Clip {
            video_id: desc.video_id.clone(),
            start_frame: desc.start_frame,
            label: desc.label.clone(),
            rgb: None,
            flow: None,
            pose: None,
        };
        for &m in modalities {
            let frames = (desc.start_frame..desc.start_frame + CLIP_LEN)
                .map(|i| {
                    let mut f = self
                        .frame(&desc.video_id, m, i)
                        .map(to_unit)
                        .ok_or_else(|| DatasetError::Missing(image_path(&desc.dir, m, i).display().to_string()))?;
                    norm.apply(m, &mut f);
                    Ok(f)
                })
                .collect::<Result<Vec<_>, DatasetError>>()?;
            *clip.slot(m) = Some(stack_frames(&frames, h, w));
        }
        Ok(clip)
    }
}

/// Per-channel mean over every cached RGB frame of the given videos.
pub fn rgb_channel_mean<'a>(cache: &FrameCache, video_ids: impl IntoIterator<Item = &'a str>) -> [f32; 3] {
    let mut sum = [0.0f64; 3];
    let mut count = 0usize;
    for id in video_ids {
        let Some(frames) = cache.frames.get(&(id.to_string(), Modality::Rgb)) else { continue };
        for f in frames.iter().flatten() {
            let plane = f.len() / 3;
            for c in 0..3 {
                sum[c] += f[c * plane..(c + 1) * plane].iter().map(|&v| v as f64 / 255.0).sum::<f64>();
            }
            count += plane;
        }
    }
    if count == 0 {
        return [0.0; 3];
    }
    sum.map(|s| (s / count as f64) as f32)
}
