//! Line-delimited JSON annotation files, one frame per line:
//! `{"frame": 3, "persons": [{"bbox": [x, y, w, h], "joints": [[x, y, c], ...]}]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Joint, PoseError, PoseFrame, Skeleton, JOINT_COUNT};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    frame: usize,
    persons: Vec<PersonRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PersonRecord {
    bbox: [f64; 4],
    joints: Vec<[f64; 3]>,
}

fn to_frame(rec: FrameRecord) -> Result<PoseFrame, String> {
    let mut persons = Vec::with_capacity(rec.persons.len());
    for (p, person) in rec.persons.into_iter().enumerate() {
        if person.joints.len() != JOINT_COUNT {
            return Err(format!(
                "person {p} has {} joints, expected {JOINT_COUNT}",
                person.joints.len()
            ));
        }
        let [_, _, w, h] = person.bbox;
        if !(w > 0.0 && h > 0.0) {
            return Err(format!("person {p} has a degenerate bbox {:?}", person.bbox));
        }
        let mut joints = [Joint {
            x: 0.0,
            y: 0.0,
            confidence: 0.0,
        }; JOINT_COUNT];
        for (j, [x, y, c]) in person.joints.into_iter().enumerate() {
            if !x.is_finite() || !y.is_finite() {
                return Err(format!("person {p} joint {j} has non-finite coordinates"));
            }
            if !(0.0..=1.0).contains(&c) {
                return Err(format!("person {p} joint {j} confidence {c} outside [0,1]"));
            }
            joints[j] = Joint { x, y, confidence: c };
        }
        persons.push(Skeleton {
            bbox: person.bbox,
            joints,
        });
    }
    Ok(PoseFrame {
        frame_index: rec.frame,
        persons,
    })
}

/// Parses annotation text; `origin` names the source in error messages.
pub fn parse_pose_str(text: &str, origin: &str) -> Result<Vec<PoseFrame>, PoseError> {
    let mut frames: Vec<PoseFrame> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |msg: String| PoseError::Malformed {
            path: origin.to_string(),
            line: line_no,
            msg,
        };
        let rec: FrameRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        let frame = to_frame(rec).map_err(malformed)?;
        if let Some(prev) = frames.last() {
            if frame.frame_index <= prev.frame_index {
                return Err(malformed(format!(
                    "frame index {} does not increase (previous {})",
                    frame.frame_index, prev.frame_index
                )));
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

pub fn parse_pose_file(path: &Path) -> Result<Vec<PoseFrame>, PoseError> {
    let text = std::fs::read_to_string(path).map_err(|source| PoseError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_pose_str(&text, &path.display().to_string())
}

pub fn serialize_pose_frames(frames: &[PoseFrame]) -> String {
    let mut out = String::new();
    for f in frames {
        let rec = FrameRecord {
            frame: f.frame_index,
            persons: f
                .persons
                .iter()
                .map(|s| PersonRecord {
                    bbox: s.bbox,
                    joints: s.joints.iter().map(|j| [j.x, j.y, j.confidence]).collect(),
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("plain data serializes"));
        out.push('\n');
    }
    out
}

pub fn write_pose_file(path: &Path, frames: &[PoseFrame]) -> Result<(), PoseError> {
    std::fs::write(path, serialize_pose_frames(frames)).map_err(|source| PoseError::Io {
        path: path.display().to_string(),
        source,
    })
}
