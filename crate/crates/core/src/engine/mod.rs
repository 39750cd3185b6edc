//! Reverse-mode differentiation engine with the operator set the stream
//! architectures need: 2D/3D convolution, max pooling, affine layers, ReLU,
//! concatenation, softmax cross-entropy and SGD.

pub mod checkpoint;
pub mod conv;
pub mod graph;
pub mod init;
pub mod params;
pub mod real;
pub mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use init::fan_in_uniform;
pub use graph::{Conv2dOptions, Conv3dOptions, Graph, NodeId};
pub use params::{sgd_update, ParameterSet};
pub use real::Real;
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("zero-size dimension in shape {shape:?}")]
    ZeroSize { shape: Vec<usize> },
    #[error("shape {shape:?} does not match {len} values")]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("pooling window {window} larger than input extent {extent}")]
    WindowTooLarge { window: usize, extent: usize },
    #[error("stride/window must be positive, got {0:?}")]
    InvalidStride(Vec<usize>),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("concat of an empty input list")]
    EmptyConcat,
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("node {0} does not exist in this graph (backward before forward?)")]
    UnknownNode(usize),
    #[error("duplicate parameter name {0:?}")]
    DuplicateParameter(String),
    #[error("unknown parameter {0:?}")]
    UnknownParameter(String),
    #[error("parameter {0:?} has no gradient")]
    MissingGradient(String),
    #[error("learning rate must be finite and non-negative, got {0}")]
    InvalidLearningRate(f64),
    #[error("checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EngineError {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Self::ShapeMismatch {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Self::Format(msg.into())
    }
}
