//! Dense optical flow by polynomial expansion, the 8-bit flow-image
//! encoding used as network input, k-gap frame pairing, and the per-pixel
//! flow mean image.

mod encode;
mod expansion;
mod farneback;
mod flo;
mod pyramid;

pub use encode::{compute_flow_mean_image, flow_to_image, image_to_flow, read_mean_image, write_mean_image};
pub use expansion::{polynomial_expansion, PolyCoeffs};
pub use farneback::estimate_flow;
pub use flo::{read_flo, write_flo, FLO_MAGIC};

use image::RgbImage;

use crate::engine::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum FlowError {
    #[error("image {width}x{height} too small for window radius {radius} (needs {needed} px per side)")]
    ImageTooSmall {
        width: usize,
        height: usize,
        radius: usize,
        needed: usize,
    },
    #[error("frame dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch(Vec<usize>, Vec<usize>),
    #[error("invalid flow parameters: {0}")]
    InvalidParams(String),
    #[error("empty image stream")]
    EmptyStream,
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Per-pixel displacement from the first frame of a pair to the second:
/// content at `p` in the first frame appears at `p + (dx, dy)` in the second.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub dx: Vec<f32>,
    pub dy: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            dx: vec![0.0; width * height],
            dy: vec![0.0; width * height],
        }
    }

    pub fn uniform(width: usize, height: usize, dx: f32, dy: f32) -> Self {
        Self {
            width,
            height,
            dx: vec![dx; width * height],
            dy: vec![dy; width * height],
        }
    }

    pub fn magnitude(&self, i: usize) -> f32 {
        self.dx[i].hypot(self.dy[i])
    }

    pub fn max_magnitude(&self) -> f32 {
        (0..self.dx.len()).map(|i| self.magnitude(i)).fold(0.0, f32::max)
    }

    /// Mean endpoint error against `truth` over pixels at least `margin`
    /// away from every border.
    pub fn interior_endpoint_error(&self, truth: &FlowField, margin: usize) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for y in margin..self.height.saturating_sub(margin) {
            for x in margin..self.width.saturating_sub(margin) {
                let i = y * self.width + x;
                let ex = (self.dx[i] - truth.dx[i]) as f64;
                let ey = (self.dy[i] - truth.dy[i]) as f64;
                sum += ex.hypot(ey);
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    pub pyramid_levels: usize,
    pub pyramid_scale: f64,
    /// Radius of the Gaussian applicability used for the polynomial fit and
    /// for averaging the displacement equations.
    pub window_radius: usize,
    pub iterations: usize,
    pub poly_sigma: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            pyramid_levels: 3,
            pyramid_scale: 0.5,
            window_radius: 7,
            iterations: 3,
            poly_sigma: 1.5,
        }
    }
}

impl FlowParams {
    pub fn min_side(&self) -> usize {
        2 * self.window_radius + 1
    }

    fn level_extent(&self, extent: usize, level: usize) -> usize {
        ((extent as f64) * self.pyramid_scale.powi(level as i32)).round() as usize
    }

    /// Image size at pyramid level `level` (0 = full resolution).
    pub fn level_dims(&self, width: usize, height: usize, level: usize) -> (usize, usize) {
        (self.level_extent(width, level), self.level_extent(height, level))
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<(), FlowError> {
        if self.pyramid_levels == 0 {
            return Err(FlowError::InvalidParams("pyramid_levels must be >= 1".into()));
        }
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return Err(FlowError::InvalidParams(format!(
                "pyramid_scale must lie in (0,1), got {}",
                self.pyramid_scale
            )));
        }
        if self.window_radius < 2 {
            return Err(FlowError::InvalidParams("window_radius must be >= 2".into()));
        }
        if self.iterations == 0 {
            return Err(FlowError::InvalidParams("iterations must be >= 1".into()));
        }
        if self.poly_sigma.is_nan() || self.poly_sigma <= 0.0 {
            return Err(FlowError::InvalidParams("poly_sigma must be > 0".into()));
        }
        let (w, h) = self.level_dims(width, height, self.pyramid_levels - 1);
        if w < self.min_side() || h < self.min_side() {
            return Err(FlowError::ImageTooSmall {
                width: w,
                height: h,
                radius: self.window_radius,
                needed: self.min_side(),
            });
        }
        Ok(())
    }

    /// Same parameters with the pyramid trimmed so the coarsest level still
    /// fits the window. Returns `None` if even the full-resolution image is
    /// too small.
    pub fn fitted_to(&self, width: usize, height: usize) -> Option<Self> {
        let mut p = *self;
        while p.pyramid_levels > 1 && p.validate(width, height).is_err() {
            p.pyramid_levels -= 1;
        }
        p.validate(width, height).ok().map(|_| p)
    }
}

/// Frame offset between the two frames of a flow pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowPairingConfig {
    pub gap_k: usize,
}

impl FlowPairingConfig {
    /// Pairing used by the three-stream variants.
    pub const THREE_STREAM: Self = Self { gap_k: 10 };

    pub fn new(gap_k: usize) -> Result<Self, FlowError> {
        if gap_k == 0 {
            return Err(FlowError::InvalidParams("gap_k must be >= 1".into()));
        }
        Ok(Self { gap_k })
    }

    /// `(earlier, later)` source frame indices for every frame `n` with
    /// `n - k >= 0`. The flow for `n` is indexed by the later frame.
    pub fn pairs(&self, frame_count: usize) -> Result<Vec<(usize, usize)>, FlowError> {
        if self.gap_k >= frame_count {
            return Err(FlowError::InvalidParams(format!(
                "gap_k {} must be smaller than the frame count {frame_count}",
                self.gap_k
            )));
        }
        Ok((self.gap_k..frame_count).map(|n| (n - self.gap_k, n)).collect())
    }
}

impl Default for FlowPairingConfig {
    fn default() -> Self {
        Self { gap_k: 1 }
    }
}

/// Luminance `0.299 R + 0.587 G + 0.114 B` as an `[H, W]` tensor in 0..255.
pub fn luminance(image: &RgbImage) -> Tensor<f32> {
    let (w, h) = image.dimensions();
    let values = image
        .pixels()
        .map(|p| 0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32)
        .collect();
    Tensor::new(&[h as usize, w as usize], values).expect("non-empty image")
}

pub(crate) fn plane_dims(image: &Tensor<f32>) -> Result<(usize, usize), FlowError> {
    match image.shape() {
        &[h, w] => Ok((w, h)),
        other => Err(FlowError::InvalidParams(format!(
            "expected a grayscale [H, W] image, got shape {other:?}"
        ))),
    }
}
