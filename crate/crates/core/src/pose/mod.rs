//! Multi-person keypoint annotations, skeleton rasterization, and
//! people-per-frame statistics.

mod annotation;
mod raster;

pub use annotation::{parse_pose_file, parse_pose_str, serialize_pose_frames, write_pose_file};
pub use raster::{line_thickness, rasterize_pose, DEFAULT_CONF_THRESHOLD, LIMBS, PALETTE};

pub const JOINT_COUNT: usize = 14;

/// Joint order shared by every annotation file.
pub const JOINT_NAMES: [&str; JOINT_COUNT] = [
    "head",
    "neck",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "r_hip",
    "r_knee",
    "r_ankle",
    "l_hip",
    "l_knee",
    "l_ankle",
];

#[derive(Debug, thiserror::Error)]
pub enum PoseError {
    #[error("{path}:{line}: {msg}")]
    Malformed { path: String, line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("empty annotation set")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Joint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    /// `(x, y, w, h)` in source-frame pixels.
    pub bbox: [f64; 4],
    pub joints: [Joint; JOINT_COUNT],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    pub frame_index: usize,
    pub persons: Vec<Skeleton>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeopleHistogram {
    /// `counts[k]` = number of frames with exactly `k` persons.
    pub counts: Vec<usize>,
    pub total_frames: usize,
    pub fraction_multi: f64,
}

pub fn people_histogram<'a, I>(frames: I) -> Result<PeopleHistogram, PoseError>
where
    I: IntoIterator<Item = &'a PoseFrame>,
{
    let mut counts: Vec<usize> = Vec::new();
    let mut total = 0;
    for f in frames {
        let k = f.persons.len();
        if counts.len() <= k {
            counts.resize(k + 1, 0);
        }
        counts[k] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(PoseError::Empty);
    }
    let multi: usize = counts.iter().skip(2).sum();
    Ok(PeopleHistogram {
        counts,
        total_frames: total,
        fraction_multi: multi as f64 / total as f64,
    })
}
