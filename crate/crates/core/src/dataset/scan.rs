use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::{ClassLabel, DatasetError, Modality, VideoRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub classes: Vec<ClassLabel>,
    pub records: Vec<VideoRecord>,
    pub warnings: Vec<String>,
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| DatasetError::io(dir, e))? {
        out.push(entry.map_err(|e| DatasetError::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

fn count_png(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    Ok(sorted_entries(dir)?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .collect())
}

/// Enumerates `<root>/<class>/<video>/frames`. Class indices follow the
/// sorted class directory names. Videos without frames are skipped with a
/// warning, as are classes without videos.
pub fn scan_dataset(root: &Path) -> Result<Scan, DatasetError> {
    if !root.is_dir() {
        return Err(DatasetError::Missing(root.display().to_string()));
    }
    let class_dirs: Vec<PathBuf> = sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).collect();
    let mut classes = Vec::new();
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let mut seen = BTreeSet::new();
    for class_dir in class_dirs {
        let name = class_dir.file_name().unwrap_or_default().to_string_lossy().to_string();
        let label = ClassLabel {
            index: classes.len(),
            name: name.clone(),
        };
        let mut class_records = Vec::new();
        for video_dir in sorted_entries(&class_dir)?.into_iter().filter(|p| p.is_dir()) {
            let video_id = video_dir.file_name().unwrap_or_default().to_string_lossy().to_string();
            let frames = count_png(&video_dir.join("frames"))?;
            if frames.is_empty() {
                let msg = format!("{}: no frames, video skipped", video_dir.join("frames").display());
                log::warn!("{msg}");
                warnings.push(msg);
                continue;
            }
            let mut dims = None;
            for f in &frames {
                let d = image::image_dimensions(f).map_err(|e| DatasetError::Decode {
                    path: f.display().to_string(),
                    msg: e.to_string(),
                })?;
                match dims {
                    None => dims = Some(d),
                    Some(expected) if expected != d => {
                        return Err(DatasetError::MixedResolution {
                            video: video_id,
                            path: f.display().to_string(),
                            expected,
                            found: d,
                        })
                    }
                    _ => {}
                }
            }
            if !seen.insert(video_id.clone()) {
                return Err(DatasetError::DuplicateVideo(video_id));
            }
            let mut modalities = vec![Modality::Rgb];
            if !count_png(&video_dir.join("flow_img"))?.is_empty() {
                modalities.push(Modality::Flow);
            }
            if !count_png(&video_dir.join("pose_img"))?.is_empty() {
                modalities.push(Modality::Pose);
            }
            let (width, height) = dims.expect("non-empty frame list");
            class_records.push(VideoRecord {
                class_label: label.clone(),
                video_id,
                frame_count: frames.len(),
                width,
                height,
                modalities,
                dir: video_dir,
            });
        }
        if class_records.is_empty() {
            let msg = format!("{}: class directory has no usable videos", class_dir.display());
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        classes.push(label);
        records.extend(class_records);
    }
    Ok(Scan {
        classes,
        records,
        warnings,
    })
}
