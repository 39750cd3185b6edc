//! The six architectures built from one per-stream blueprint.
//!
//! Every stream is a two-stage convolutional stack followed by an fc7 layer;
//! stream features are concatenated and fed to one linear classifier.
//!
//! | mode          | stage 1                                   | stage 2                          |
//! |---------------|-------------------------------------------|----------------------------------|
//! | single_frame  | conv2d 3→c1 5×5 /2, relu, pool 2×2        | conv2d c1→c2 3×3, relu, pool 2×2 |
//! | stacked16     | conv2d 48→c1 5×5 /2, relu, pool 2×2       | conv2d c1→c2 3×3, relu, pool 2×2 |
//! | conv3d16      | conv3d 3→c1 3×5×5 /(1,2,2), relu, pool 1×2×2 | conv3d c1→c2 3×3×3, relu, pool 2×2×2 |

mod batch;
mod checkpoint;

pub use batch::{assemble_batch, Batch, UnitRef};
pub use checkpoint::{load_model, read_model, save_model, write_model};

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Clip, Modality, CLIP_LEN};
use crate::engine::{
    fan_in_uniform, Conv2dOptions, Conv3dOptions, EngineError, Graph, NodeId, ParameterSet, Real, Tensor,
};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("model needs the {0} stream but the clip does not carry it")]
    MissingModality(StreamKind),
    #[error("{stream} input is {found:?}, model expects {expected:?}")]
    InputShape {
        stream: StreamKind,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("unit index {index} out of range for {units} units")]
    UnitOutOfRange { index: usize, units: usize },
    #[error("unknown preset {0:?}; valid presets: {list}", list = preset_list())]
    UnknownPreset(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StreamKind {
    Rgb,
    Flow,
    Pose,
}

impl StreamKind {
    pub const ALL: [StreamKind; 3] = [StreamKind::Rgb, StreamKind::Flow, StreamKind::Pose];

    pub fn name(self) -> &'static str {
        match self {
            StreamKind::Rgb => "rgb",
            StreamKind::Flow => "flow",
            StreamKind::Pose => "pose",
        }
    }

    pub fn modality(self) -> Modality {
        match self {
            StreamKind::Rgb => Modality::Rgb,
            StreamKind::Flow => Modality::Flow,
            StreamKind::Pose => Modality::Pose,
        }
    }
}

impl fmt::Display for StreamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StreamKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StreamKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ModelError::Config(format!("unknown stream {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemporalMode {
    SingleFrame,
    Stacked16,
    Conv3d16,
}

impl TemporalMode {
    pub fn name(self) -> &'static str {
        match self {
            TemporalMode::SingleFrame => "single_frame",
            TemporalMode::Stacked16 => "stacked16",
            TemporalMode::Conv3d16 => "conv3d16",
        }
    }

    /// Classification units per 16-frame clip.
    pub fn units_per_clip(self) -> usize {
        match self {
            TemporalMode::SingleFrame => CLIP_LEN,
            _ => 1,
        }
    }
}

impl fmt::Display for TemporalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TemporalMode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [TemporalMode::SingleFrame, TemporalMode::Stacked16, TemporalMode::Conv3d16]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| ModelError::Config(format!("unknown temporal mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub name: String,
    pub streams: Vec<StreamKind>,
    pub temporal_mode: TemporalMode,
    pub fc7_width: usize,
    pub class_count: usize,
    /// `(height, width)` of every input frame.
    pub input_size: (usize, usize),
    /// Flow pairing offset; meaningful only when a flow stream is present.
    pub gap_k: usize,
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    /// Zero-pad convolutions to keep "same" extents (stride aside); lets
    /// tiny inputs pass through both stages.
    pub same_padding: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Frame,
    TwoStream,
    T3dRgb,
    T3dSkel,
    ThreeStream,
    TThreeStream,
    /// Flow-only single-frame baseline; not one of the six canonical report rows.
    FlowFrame,
}

impl Preset {
    /// The six canonical presets in report row order.
    pub const CANONICAL: [Preset; 6] = [
        Preset::Frame,
        Preset::TwoStream,
        Preset::T3dRgb,
        Preset::T3dSkel,
        Preset::ThreeStream,
        Preset::TThreeStream,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Frame => "FRAME",
            Preset::TwoStream => "TWO_STREAM",
            Preset::T3dRgb => "T3D_RGB",
            Preset::T3dSkel => "T3D_SKEL",
            Preset::ThreeStream => "THREE_STREAM",
            Preset::TThreeStream => "T_THREE_STREAM",
            Preset::FlowFrame => "FLOW_FRAME",
        }
    }

    pub fn streams(self) -> Vec<StreamKind> {
        use StreamKind::*;
        match self {
            Preset::Frame | Preset::T3dRgb => vec![Rgb],
            Preset::TwoStream => vec![Rgb, Flow],
            Preset::T3dSkel => vec![Pose],
            Preset::ThreeStream | Preset::TThreeStream => vec![Rgb, Flow, Pose],
            Preset::FlowFrame => vec![Flow],
        }
    }

    pub fn temporal_mode(self) -> TemporalMode {
        match self {
            Preset::T3dRgb | Preset::T3dSkel => TemporalMode::Conv3d16,
            Preset::TThreeStream => TemporalMode::Stacked16,
            _ => TemporalMode::SingleFrame,
        }
    }

    /// Default flow gap: the three-stream variants pair frame `n` with `n − 10`,
    /// the other flow-bearing variants use consecutive frames.
    pub fn default_gap_k(self) -> usize {
        match self {
            Preset::ThreeStream | Preset::TThreeStream => 10,
            _ => 1,
        }
    }

    pub fn config(self, class_count: usize, input_size: (usize, usize)) -> ModelConfig {
        ModelConfig {
            name: self.name().to_string(),
            streams: self.streams(),
            temporal_mode: self.temporal_mode(),
            fc7_width: 128,
            class_count,
            input_size,
            gap_k: self.default_gap_k(),
            conv1_channels: 16,
            conv2_channels: 32,
            same_padding: false,
        }
    }
}

fn preset_list() -> String {
    let mut names: Vec<&str> = Preset::CANONICAL.iter().map(|p| p.name()).collect();
    names.push("(baseline) FLOW_FRAME");
    names.join(", ")
}

impl FromStr for Preset {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::CANONICAL
            .into_iter()
            .chain([Preset::FlowFrame])
            .find(|p| p.name() == s)
            .ok_or_else(|| ModelError::UnknownPreset(s.to_string()))
    }
}

/// The six canonical configurations.
pub fn canonical_presets(class_count: usize, input_size: (usize, usize)) -> Vec<ModelConfig> {
    Preset::CANONICAL.iter().map(|p| p.config(class_count, input_size)).collect()
}

fn pooled(n: usize, window: usize) -> usize {
    if n < window {
        0
    } else {
        (n - window) / window + 1
    }
}

fn conv_out(n: usize, k: usize, stride: usize, pad: usize) -> usize {
    if n + 2 * pad < k {
        0
    } else {
        (n + 2 * pad - k) / stride + 1
    }
}

impl ModelConfig {
    pub fn has_stream(&self, s: StreamKind) -> bool {
        self.streams.contains(&s)
    }

    pub fn has_flow(&self) -> bool {
        self.has_stream(StreamKind::Flow)
    }

    fn pad(&self, k: usize) -> usize {
        if self.same_padding {
            k / 2
        } else {
            0
        }
    }

    fn input_channels(&self) -> usize {
        match self.temporal_mode {
            TemporalMode::Stacked16 => 3 * CLIP_LEN,
            _ => 3,
        }
    }

    /// Kernel shapes of the two conv stages, `[out, in, (t,) h, w]`.
    fn kernel_shapes(&self) -> [Vec<usize>; 2] {
        let (c1, c2, cin) = (self.conv1_channels, self.conv2_channels, self.input_channels());
        match self.temporal_mode {
            TemporalMode::Conv3d16 => [vec![c1, cin, 3, 5, 5], vec![c2, c1, 3, 3, 3]],
            _ => [vec![c1, cin, 5, 5], vec![c2, c1, 3, 3]],
        }
    }

    /// Per-unit input shape of one stream (batch axis excluded).
    pub fn stream_input_shape(&self) -> Vec<usize> {
        let (h, w) = self.input_size;
        match self.temporal_mode {
            TemporalMode::SingleFrame => vec![3, h, w],
            TemporalMode::Stacked16 => vec![3 * CLIP_LEN, h, w],
            TemporalMode::Conv3d16 => vec![3, CLIP_LEN, h, w],
        }
    }

    /// Flattened output of a stream's second stage.
    pub fn stage2_dims(&self) -> Vec<usize> {
        let (h, w) = self.input_size;
        let spatial = |n: usize| {
            let a = pooled(conv_out(n, 5, 2, self.pad(5)), 2);
            pooled(conv_out(a, 3, 1, self.pad(3)), 2)
        };
        match self.temporal_mode {
            TemporalMode::Conv3d16 => {
                let t = conv_out(CLIP_LEN, 3, 1, self.pad(3));
                let t = pooled(conv_out(t, 3, 1, self.pad(3)), 2);
                vec![self.conv2_channels, t, spatial(h), spatial(w)]
            }
            _ => vec![self.conv2_channels, spatial(h), spatial(w)],
        }
    }

    pub fn stage2_features(&self) -> usize {
        self.stage2_dims().iter().product()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.streams.is_empty() {
            return Err(ModelError::Config("at least one stream is required".into()));
        }
        let mut seen = self.streams.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.streams.len() {
            return Err(ModelError::Config(format!("duplicate streams in {:?}", self.streams)));
        }
        if self.class_count < 2 {
            return Err(ModelError::Config(format!("need at least 2 classes, got {}", self.class_count)));
        }
        if self.fc7_width == 0 || self.conv1_channels == 0 || self.conv2_channels == 0 {
            return Err(ModelError::Config("layer widths must be positive".into()));
        }
        if self.has_flow() && self.gap_k == 0 {
            return Err(ModelError::Config("flow streams need gap_k >= 1".into()));
        }
        if self.stage2_dims().contains(&0) {
            let (h, w) = self.input_size;
            return Err(ModelError::Config(format!(
                "input {h}x{w} is too small for the {} stack{}",
                self.temporal_mode,
                if self.same_padding { "" } else { " without same padding" }
            )));
        }
        Ok(())
    }

    /// Parameter count: per stream `c1·(cin·k1 + 1) + c2·(c1·k2 + 1) +
    /// fc7·(F + 1)`, plus `C·(S·fc7 + 1)` for the classifier, where `k1, k2`
    /// are the kernel volumes and `F` the flattened stage-2 size.
    pub fn parameter_count(&self) -> usize {
        let [k1, k2] = self.kernel_shapes();
        let vol = |k: &[usize]| k[2..].iter().product::<usize>();
        let (c1, c2, cin, f7) = (self.conv1_channels, self.conv2_channels, self.input_channels(), self.fc7_width);
        let per_stream = c1 * (cin * vol(&k1) + 1) + c2 * (c1 * vol(&k2) + 1) + f7 * (self.stage2_features() + 1);
        self.streams.len() * per_stream + self.class_count * (self.streams.len() * f7 + 1)
    }
}

/// A configured model with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParameterSet<f32>,
    /// RGB channel mean the model was trained with.
    pub rgb_mean: [f32; 3],
}

fn pname(stream: StreamKind, layer: &str, part: &str) -> String {
    format!("{stream}.{layer}.{part}")
}

/// Fresh parameters: fan-in uniform weights, zero biases, drawn in stream
/// order from one seeded generator.
pub fn build_model(config: ModelConfig, seed: u64) -> Result<Model, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParameterSet::new();
    let [k1, k2] = config.kernel_shapes();
    let fan = |k: &[usize]| k[1..].iter().product::<usize>();
    for &s in &config.streams {
        params.insert(pname(s, "conv1", "weight"), fan_in_uniform(&k1, fan(&k1), &mut rng))?;
        params.insert(pname(s, "conv1", "bias"), Tensor::zeros(&[k1[0]]))?;
        params.insert(pname(s, "conv2", "weight"), fan_in_uniform(&k2, fan(&k2), &mut rng))?;
        params.insert(pname(s, "conv2", "bias"), Tensor::zeros(&[k2[0]]))?;
        let f = config.stage2_features();
        params.insert(pname(s, "fc7", "weight"), fan_in_uniform(&[f, config.fc7_width], f, &mut rng))?;
        params.insert(pname(s, "fc7", "bias"), Tensor::zeros(&[config.fc7_width]))?;
    }
    let d = config.streams.len() * config.fc7_width;
    params.insert("classifier.weight", fan_in_uniform(&[d, config.class_count], d, &mut rng))?;
    params.insert("classifier.bias", Tensor::zeros(&[config.class_count]))?;
    Ok(Model {
        config,
        params,
        rgb_mean: [0.0; 3],
    })
}

/// Node handles of one recorded forward pass.
#[derive(Debug, Clone)]
pub struct ForwardNodes {
    pub inputs: Vec<NodeId>,
    /// Per-stream fc7 activations, in config stream order.
    pub stream_features: Vec<NodeId>,
    /// Concatenated fc7 features fed to the classifier.
    pub features: NodeId,
    pub logits: NodeId,
}

fn stream_stack<T: Real>(
    config: &ModelConfig,
    g: &mut Graph<T>,
    params: &ParameterSet<T>,
    stream: StreamKind,
    x: NodeId,
) -> Result<NodeId, ModelError> {
    let p = |g: &mut Graph<T>, layer: &str, part: &str| g.param(params, &pname(stream, layer, part));
    let (k1, b1) = (p(g, "conv1", "weight")?, p(g, "conv1", "bias")?);
    let (k2, b2) = (p(g, "conv2", "weight")?, p(g, "conv2", "bias")?);
    let (p5, p3) = (config.pad(5), config.pad(3));
    let h = match config.temporal_mode {
        TemporalMode::Conv3d16 => {
            let h = g.conv3d(
                x,
                k1,
                b1,
                Conv3dOptions {
                    stride: [1, 2, 2],
                    padding: [p3, p5, p5],
                },
            )?;
            let h = g.relu(h)?;
            let h = g.maxpool3d(h, [1, 2, 2], [1, 2, 2])?;
            let h = g.conv3d(
                h,
                k2,
                b2,
                Conv3dOptions {
                    stride: [1, 1, 1],
                    padding: [p3; 3],
                },
            )?;
            let h = g.relu(h)?;
            g.maxpool3d(h, [2, 2, 2], [2, 2, 2])?
        }
        _ => {
            let h = g.conv2d(x, k1, b1, Conv2dOptions::stride(2).padded(p5))?;
            let h = g.relu(h)?;
            let h = g.maxpool2d(h, [2, 2], [2, 2])?;
            let h = g.conv2d(h, k2, b2, Conv2dOptions::stride(1).padded(p3))?;
            let h = g.relu(h)?;
            g.maxpool2d(h, [2, 2], [2, 2])?
        }
    };
    let h = g.flatten(h)?;
    let (w7, b7) = (p(g, "fc7", "weight")?, p(g, "fc7", "bias")?);
    let h = g.linear(h, w7, b7)?;
    Ok(g.relu(h)?)
}

/// Records the model on `g` for a batch whose tensors follow the config's
/// stream layout.
pub fn forward<T: Real>(
    config: &ModelConfig,
    g: &mut Graph<T>,
    params: &ParameterSet<T>,
    batch: &Batch<T>,
) -> Result<ForwardNodes, ModelError> {
    let expected = config.stream_input_shape();
    let mut inputs = Vec::new();
    let mut feats = Vec::new();
    for &s in &config.streams {
        let t = batch.stream(s).ok_or(ModelError::MissingModality(s))?;
        if t.shape()[1..] != expected[..] {
            return Err(ModelError::InputShape {
                stream: s,
                expected: expected.clone(),
                found: t.shape()[1..].to_vec(),
            });
        }
        let x = g.input(t.clone());
        inputs.push(x);
        feats.push(stream_stack(config, g, params, s, x)?);
    }
    let features = if feats.len() == 1 { feats[0] } else { g.concat(&feats)? };
    let (wc, bc) = (g.param(params, "classifier.weight")?, g.param(params, "classifier.bias")?);
    let logits = g.linear(features, wc, bc)?;
    Ok(ForwardNodes {
        inputs,
        stream_features: feats,
        features,
        logits,
    })
}

impl Model {
    /// Logits of every unit of a clip: `[16, C]` in single-frame mode,
    /// `[1, C]` otherwise.
    pub fn classify_clip(&self, clip: &Clip) -> Result<Tensor<f32>, ModelError> {
        let units: Vec<UnitRef> = (0..self.config.temporal_mode.units_per_clip())
            .map(|u| UnitRef::new(clip, &self.config, u))
            .collect();
        let batch = assemble_batch(&self.config, &units)?;
        let mut g = Graph::new();
        let nodes = forward(&self.config, &mut g, &self.params, &batch)?;
        Ok(g.value(nodes.logits).clone())
    }
}

/// Logits `[1, C]` of one unit of a clip (frame `unit` in single-frame mode;
/// must be 0 in the temporal modes).
pub fn forward_classify(model: &Model, clip: &Clip, unit: usize) -> Result<Tensor<f32>, ModelError> {
    let units = model.config.temporal_mode.units_per_clip();
    if unit >= units {
        return Err(ModelError::UnitOutOfRange { index: unit, units });
    }
    let batch = assemble_batch(&model.config, &[UnitRef::new(clip, &model.config, unit)])?;
    let mut g = Graph::new();
    let nodes = forward(&model.config, &mut g, &model.params, &batch)?;
    Ok(g.value(nodes.logits).clone())
}
