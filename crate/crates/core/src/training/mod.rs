//! Seeded SGD training, unit evaluation, per-video voting, metrics and the
//! comparison report.

mod eval;
mod report;
mod train;

pub use eval::{
    argmax, evaluate_units, group_by_video, unit_confusion, vote_per_video, Metrics, UnitPrediction, VideoUnits,
    VoteResult,
};
pub use report::{emit_report, read_report_csv, ReportRow};
pub use train::{train, EpochLog, TrainConfig, TrainReport};

use crate::engine::EngineError;
use crate::models::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch} (units {first_unit}..)")]
    NonFinite {
        epoch: usize,
        batch: usize,
        first_unit: usize,
        loss: f32,
    },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("video {0:?} has no unit predictions")]
    NoPredictions(String),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}
