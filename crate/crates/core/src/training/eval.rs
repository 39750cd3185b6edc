use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Clip;
use crate::engine::Graph;
use crate::models::{assemble_batch, forward, Model, UnitRef};

use super::TrainError;

const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitPrediction {
    pub video_id: String,
    pub truth: usize,
    pub predicted: usize,
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Classifies every unit (frame or chunk) of `clips`. Batches run in
/// parallel; results keep clip order.
pub fn evaluate_units(model: &Model, clips: &[Clip]) -> Result<Vec<UnitPrediction>, TrainError> {
    if clips.is_empty() {
        return Err(TrainError::EmptySplit("evaluation"));
    }
    let per_clip = model.config.temporal_mode.units_per_clip();
    let units: Vec<UnitRef> = clips
        .iter()
        .flat_map(|c| (0..per_clip).map(|u| UnitRef::new(c, &model.config, u)))
        .collect();
    let batches = units
        .par_chunks(EVAL_BATCH)
        .map(|chunk| {
            let batch = assemble_batch(&model.config, chunk)?;
            let mut g = Graph::new();
            let nodes = forward(&model.config, &mut g, &model.params, &batch)?;
            let logits = g.value(nodes.logits);
            let c = model.config.class_count;
            Ok(chunk
                .iter()
                .enumerate()
                .map(|(i, u)| UnitPrediction {
                    video_id: u.clip.video_id.clone(),
                    truth: u.clip.label.index,
                    predicted: argmax(&logits.values()[i * c..(i + 1) * c]),
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    Ok(batches.into_iter().flatten().collect())
}

/// Rows are truth, columns prediction.
pub fn unit_confusion(preds: &[UnitPrediction], classes: usize) -> Result<Vec<Vec<usize>>, TrainError> {
    let mut m = vec![vec![0usize; classes]; classes];
    for p in preds {
        for label in [p.truth, p.predicted] {
            if label >= classes {
                return Err(TrainError::Label { label, classes });
            }
        }
        m[p.truth][p.predicted] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoUnits {
    pub video_id: String,
    pub truth: usize,
    pub predictions: Vec<usize>,
}

/// Groups unit predictions by video, ordered by video id.
pub fn group_by_video(preds: &[UnitPrediction]) -> Vec<VideoUnits> {
    let mut map: BTreeMap<&str, VideoUnits> = BTreeMap::new();
    for p in preds {
        map.entry(&p.video_id)
            .or_insert_with(|| VideoUnits {
                video_id: p.video_id.clone(),
                truth: p.truth,
                predictions: Vec::new(),
            })
            .predictions
            .push(p.predicted);
    }
    map.into_values().collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteResult {
    pub video_id: String,
    pub truth: usize,
    pub counts: Vec<usize>,
    pub winner: usize,
}

/// Plurality vote per video (lowest class index wins ties) and the fraction
/// of videos whose winner is the truth.
pub fn vote_per_video(videos: &[VideoUnits], classes: usize) -> Result<(Vec<VoteResult>, f64), TrainError> {
    let mut results = Vec::with_capacity(videos.len());
    for v in videos {
        if v.predictions.is_empty() {
            return Err(TrainError::NoPredictions(v.video_id.clone()));
        }
        let mut counts = vec![0usize; classes];
        for &p in &v.predictions {
            *counts.get_mut(p).ok_or(TrainError::Label { label: p, classes })? += 1;
        }
        let mut winner = 0;
        for (i, &c) in counts.iter().enumerate() {
            if c > counts[winner] {
                winner = i;
            }
        }
        results.push(VoteResult {
            video_id: v.video_id.clone(),
            truth: v.truth,
            counts,
            winner,
        });
    }
    let correct = results.iter().filter(|r| r.winner == r.truth).count();
    let acc = if results.is_empty() {
        0.0
    } else {
        correct as f64 / results.len() as f64
    };
    Ok((results, acc))
}

fn trace_ratio(m: &[Vec<usize>]) -> f64 {
    let total: usize = m.iter().flatten().sum();
    if total == 0 {
        return 0.0;
    }
    (0..m.len()).map(|i| m[i][i]).sum::<usize>() as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub variant: String,
    pub class_names: Vec<String>,
    pub per_unit_accuracy: f64,
    pub per_video_accuracy: f64,
    /// Unit-level confusion, rows truth, columns prediction.
    pub confusion: Vec<Vec<usize>>,
    /// Video-level confusion of the voted winners.
    pub video_confusion: Vec<Vec<usize>>,
    pub loss_curve: Vec<f64>,
}

impl Metrics {
    pub fn from_predictions(
        variant: &str,
        class_names: &[String],
        preds: &[UnitPrediction],
        loss_curve: Vec<f64>,
    ) -> Result<Self, TrainError> {
        let classes = class_names.len();
        let confusion = unit_confusion(preds, classes)?;
        let (votes, per_video_accuracy) = vote_per_video(&group_by_video(preds), classes)?;
        let mut video_confusion = vec![vec![0usize; classes]; classes];
        for v in &votes {
            video_confusion[v.truth][v.winner] += 1;
        }
        Ok(Self {
            variant: variant.to_string(),
            class_names: class_names.to_vec(),
            per_unit_accuracy: trace_ratio(&confusion),
            per_video_accuracy,
            confusion,
            video_confusion,
            loss_curve,
        })
    }
}
