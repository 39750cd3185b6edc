use super::{ClassLabel, VideoRecord};

/// Frames per chunk.
pub const CLIP_LEN: usize = 16;

/// A chunk of one video: frames `start_frame .. start_frame + 16`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipDescriptor {
    pub video_id: String,
    pub label: ClassLabel,
    pub start_frame: usize,
    /// Flow pairing offset; flow at position `t` pairs frames
    /// `(start + t - gap_k, start + t)`.
    pub gap_k: usize,
    pub dir: std::path::PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkPlan {
    pub clips: Vec<ClipDescriptor>,
    /// Set when the video is shorter than one chunk plus the flow offset.
    pub too_short: bool,
}

/// Non-overlapping chunks starting at `gap_k`, `gap_k + 16`, ...; trailing
/// frames that do not fill a chunk are dropped.
pub fn chunk_video(record: &VideoRecord, gap_k: usize) -> ChunkPlan {
    let usable = record.frame_count.saturating_sub(gap_k);
    let n = usable / CLIP_LEN;
    if n == 0 {
        log::warn!(
            "video {} has {} frames, fewer than {} needed for one chunk",
            record.video_id,
            record.frame_count,
            CLIP_LEN + gap_k
        );
    }
    ChunkPlan {
        clips: (0..n)
            .map(|i| ClipDescriptor {
                video_id: record.video_id.clone(),
                label: record.class_label.clone(),
                start_frame: gap_k + i * CLIP_LEN,
                gap_k,
                dir: record.dir.clone(),
            })
            .collect(),
        too_short: n == 0,
    }
}
