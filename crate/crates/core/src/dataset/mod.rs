//! Dataset layout scanning, per-video splits, 16-frame chunking, aligned
//! multi-modality clip loading and the synthetic motion suites.
//!
//! On-disk layout, one directory per video:
//!
//! ```text
//! <root>/<class>/<video_id>/frames/%06d.png
//!                          /flow/%06d.flo        (indexed by the later frame)
//!                          /flow_img/%06d.png
//!                          /pose/annotations.jsonl
//!                          /pose_img/%06d.png
//! ```

mod chunk;
mod clip;
mod scan;
mod split;
pub mod synth;

pub use chunk::{chunk_video, ChunkPlan, ClipDescriptor, CLIP_LEN};
pub use clip::{bilinear_resize, load_clip, load_frame, rgb_channel_mean, Clip, FrameCache, Normalization};
pub use scan::{scan_dataset, Scan};
pub use split::{make_splits, read_split_file, write_split_file, Split, SplitAssignment};

use std::fmt;
use std::path::{Path, PathBuf};

/// The ten real-data classes in index order.
pub const CANONICAL_CLASSES: [&str; 10] = [
    "ballet", "break", "flamenco", "foxtrot", "latin", "quickstep", "square", "swing", "tango", "waltz",
];

pub const POSE_FILE: &str = "annotations.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: cannot decode image: {msg}")]
    Decode { path: String, msg: String },
    #[error("missing file {0}")]
    Missing(String),
    #[error("video {video}: frame {path} is {found:?}, expected {expected:?}")]
    MixedResolution {
        video: String,
        path: String,
        expected: (u32, u32),
        found: (u32, u32),
    },
    #[error("class {class:?} has {count} videos; splitting needs at least 3")]
    TooFewVideos { class: String, count: usize },
    #[error("duplicate video id {0:?}")]
    DuplicateVideo(String),
    #[error("{path}:{line}: {msg}")]
    SplitFile { path: String, line: usize, msg: String },
    #[error("invalid dataset request: {0}")]
    Invalid(String),
}

impl DatasetError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassLabel {
    pub index: usize,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    Rgb,
    Flow,
    Pose,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Rgb, Modality::Flow, Modality::Pose];

    /// Directory holding this modality's network-input images.
    pub fn image_dir(self) -> &'static str {
        match self {
            Modality::Rgb => "frames",
            Modality::Flow => "flow_img",
            Modality::Pose => "pose_img",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Rgb => "rgb",
            Modality::Flow => "flow",
            Modality::Pose => "pose",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoRecord {
    pub class_label: ClassLabel,
    pub video_id: String,
    pub frame_count: usize,
    pub width: u32,
    pub height: u32,
    pub modalities: Vec<Modality>,
    pub dir: PathBuf,
}

impl VideoRecord {
    pub fn frame_path(&self, modality: Modality, index: usize) -> PathBuf {
        image_path(&self.dir, modality, index)
    }

    pub fn flo_path(&self, index: usize) -> PathBuf {
        self.dir.join("flow").join(format!("{index:06}.flo"))
    }

    pub fn pose_file(&self) -> PathBuf {
        self.dir.join("pose").join(POSE_FILE)
    }

    pub fn has(&self, modality: Modality) -> bool {
        self.modalities.contains(&modality)
    }
}

pub fn image_path(video_dir: &Path, modality: Modality, index: usize) -> PathBuf {
    video_dir.join(modality.image_dir()).join(format!("{index:06}.png"))
}
