use crate::dataset::{Clip, CLIP_LEN};
use crate::engine::{Real, Tensor};

use super::{ModelConfig, ModelError, StreamKind, TemporalMode};

/// One classification unit: a whole clip, or one frame of it.
#[derive(Debug, Clone, Copy)]
pub struct UnitRef<'a> {
    pub clip: &'a Clip,
    /// Frame within the clip in single-frame mode.
    pub frame: Option<usize>,
}

impl<'a> UnitRef<'a> {
    pub fn new(clip: &'a Clip, config: &ModelConfig, unit: usize) -> Self {
        let frame = (config.temporal_mode == TemporalMode::SingleFrame).then_some(unit);
        Self { clip, frame }
    }
}

/// Stream tensors `[N, ...]` plus labels for one mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T: Real = f32> {
    pub rgb: Option<Tensor<T>>,
    pub flow: Option<Tensor<T>>,
    pub pose: Option<Tensor<T>>,
    pub labels: Vec<usize>,
}

impl<T: Real> Batch<T> {
    pub fn stream(&self, s: StreamKind) -> Option<&Tensor<T>> {
        match s {
            StreamKind::Rgb => self.rgb.as_ref(),
            StreamKind::Flow => self.flow.as_ref(),
            StreamKind::Pose => self.pose.as_ref(),
        }
    }

    pub fn stream_mut(&mut self, s: StreamKind) -> &mut Option<Tensor<T>> {
        match s {
            StreamKind::Rgb => &mut self.rgb,
            StreamKind::Flow => &mut self.flow,
            StreamKind::Pose => &mut self.pose,
        }
    }

    pub fn cast<U: Real>(&self) -> Batch<U> {
        Batch {
            rgb: self.rgb.as_ref().map(Tensor::cast),
            flow: self.flow.as_ref().map(Tensor::cast),
            pose: self.pose.as_ref().map(Tensor::cast),
            labels: self.labels.clone(),
        }
    }
}

/// Gathers the config's streams for `units`. Stacked clips keep the clip's
/// `[3, 16, H, W]` memory order, so stacked channel `c·16 + t` is channel `c`
/// of frame `t`.
pub fn assemble_batch(config: &ModelConfig, units: &[UnitRef<'_>]) -> Result<Batch<f32>, ModelError> {
    let mut batch = Batch {
        rgb: None,
        flow: None,
        pose: None,
        labels: units.iter().map(|u| u.clip.label.index).collect(),
    };
    let per_unit = config.stream_input_shape();
    for &s in &config.streams {
        let m = s.modality();
        let mut values = Vec::with_capacity(units.len() * per_unit.iter().product::<usize>());
        for u in units {
            let t = u.clip.modality(m).ok_or(ModelError::MissingModality(s))?;
            let &[3, len, h, w] = t.shape() else {
                return Err(ModelError::InputShape {
                    stream: s,
                    expected: vec![3, CLIP_LEN, config.input_size.0, config.input_size.1],
                    found: t.shape().to_vec(),
                });
            };
            let wrong_len = config.temporal_mode != TemporalMode::SingleFrame && len != CLIP_LEN;
            if (h, w) != config.input_size || wrong_len {
                return Err(ModelError::InputShape {
                    stream: s,
                    expected: vec![3, CLIP_LEN, config.input_size.0, config.input_size.1],
                    found: t.shape().to_vec(),
                });
            }
            match u.frame {
                Some(f) => {
                    if f >= len {
                        return Err(ModelError::UnitOutOfRange { index: f, units: len });
                    }
                    let plane = h * w;
                    for c in 0..3 {
                        let at = (c * len + f) * plane;
                        values.extend_from_slice(&t.values()[at..at + plane]);
                    }
                }
                None => values.extend_from_slice(t.values()),
            }
        }
        let mut shape = vec![units.len()];
        shape.extend_from_slice(&per_unit);
        *batch.stream_mut(s) = Some(Tensor::new(&shape, values)?);
    }
    Ok(batch)
}
