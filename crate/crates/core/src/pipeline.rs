//! The preprocessing, training and evaluation stages behind each CLI
//! subcommand. Derived files live next to the source data:
//!
//! ```text
//! <root>/videos.tsv      scan index
//! <root>/splits.tsv      per-video split assignment
//! <root>/flow_meta.json  gap and encoding range of the flow images
//! <root>/flow_mean.bin   train-split flow mean image
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    chunk_video, make_splits, read_split_file, rgb_channel_mean, scan_dataset, write_split_file, Clip,
    ClipDescriptor, FrameCache, Modality, Normalization, Scan, Split, SplitAssignment, VideoRecord,
};
use crate::flow::{
    estimate_flow, flow_to_image, luminance, read_mean_image, write_flo, write_mean_image, FlowPairingConfig,
    FlowParams,
};
use crate::models::{build_model, Model, ModelConfig};
use crate::pose::{parse_pose_file, rasterize_pose, PoseFrame};
use crate::training::{evaluate_units, train, Metrics, TrainConfig, TrainReport};

pub const VIDEO_INDEX: &str = "videos.tsv";
pub const SPLIT_FILE: &str = "splits.tsv";
pub const FLOW_META: &str = "flow_meta.json";
pub const FLOW_MEAN: &str = "flow_mean.bin";

/// Offsets deriving per-stage seeds from the global seed.
#[derive(Debug, Clone, Copy)]
pub enum Stage {
    Split = 0,
    Synth = 1,
    ModelInit = 2,
    Shuffle = 3,
}

pub fn stage_seed(seed: u64, stage: Stage) -> u64 {
    seed.wrapping_add(stage as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowMeta {
    pub gap_k: usize,
    pub max_magnitude: f64,
}

/// Default flow-image range: `2 (k + 1)` px, enough for a sprite moving about
/// two pixels per frame over `k` frames.
pub fn default_max_magnitude(gap_k: usize) -> f64 {
    2.0 * (gap_k as f64 + 1.0)
}

pub fn scan(root: &Path) -> Result<Scan> {
    let scan = scan_dataset(root)?;
    for w in &scan.warnings {
        log::warn!("{w}");
    }
    let mut index = String::from("video_id\tclass\tframes\twidth\theight\tmodalities\n");
    for r in &scan.records {
        let mods: Vec<String> = r.modalities.iter().map(|m| m.to_string()).collect();
        index.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.video_id,
            r.class_label.name,
            r.frame_count,
            r.width,
            r.height,
            mods.join(",")
        ));
    }
    let path = root.join(VIDEO_INDEX);
    fs::write(&path, index).with_context(|| format!("writing {}", path.display()))?;
    log::info!("scanned {} videos in {} classes", scan.records.len(), scan.classes.len());
    Ok(scan)
}

pub fn split(root: &Path, seed: u64) -> Result<SplitAssignment> {
    let scan = scan_dataset(root)?;
    let splits = make_splits(&scan.records, seed)?;
    write_split_file(&root.join(SPLIT_FILE), &splits)?;
    log::info!(
        "split {} videos: {} train / {} val / {} test",
        scan.records.len(),
        splits.count(Split::Train),
        splits.count(Split::Val),
        splits.count(Split::Test)
    );
    Ok(splits)
}

fn read_splits(root: &Path) -> Result<SplitAssignment> {
    let path = root.join(SPLIT_FILE);
    ensure!(path.is_file(), "{} not found; run `split` first", path.display());
    Ok(read_split_file(&path)?)
}

fn load_rgb(path: &Path) -> Result<image::RgbImage> {
    Ok(image::open(path)
        .with_context(|| format!("decoding {}", path.display()))?
        .to_rgb8())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub gap_k: usize,
    pub max_magnitude: Option<f64>,
    pub params: FlowParams,
}

impl FlowOptions {
    pub fn new(gap_k: usize) -> Self {
        Self {
            gap_k,
            max_magnitude: None,
            params: FlowParams::default(),
        }
    }
}

fn video_flow(record: &VideoRecord, pairing: FlowPairingConfig, params: &FlowParams, max_mag: f64) -> Result<usize> {
    let frames_dir = record.dir.join("frames");
    ensure!(frames_dir.is_dir(), "missing frames directory {}", frames_dir.display());
    let params = params
        .fitted_to(record.width as usize, record.height as usize)
        .with_context(|| format!("video {}: frames too small for flow", record.video_id))?;
    let lum = (0..record.frame_count)
        .map(|i| load_rgb(&record.frame_path(Modality::Rgb, i)).map(|im| luminance(&im)))
        .collect::<Result<Vec<_>>>()?;
    for dir in ["flow", Modality::Flow.image_dir()] {
        let d = record.dir.join(dir);
        fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
    }
    let pairs = pairing.pairs(record.frame_count)?;
    for &(a, b) in &pairs {
        let f = estimate_flow(&lum[a], &lum[b], &params)?;
        write_flo(&record.flo_path(b), &f)?;
        let path = record.frame_path(Modality::Flow, b);
        flow_to_image(&f, max_mag)
            .save(&path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(pairs.len())
}

/// Computes k-gap flow for every video (`flow/` and `flow_img/`, indexed by
/// the later frame), then the per-pixel mean of the train-split flow images.
pub fn flow(root: &Path, opts: &FlowOptions) -> Result<FlowMeta> {
    let pairing = FlowPairingConfig::new(opts.gap_k)?;
    let max_magnitude = opts.max_magnitude.unwrap_or_else(|| default_max_magnitude(opts.gap_k));
    ensure!(max_magnitude > 0.0, "flow image range must be positive");
    let scan = scan_dataset(root)?;
    if scan.records.is_empty() {
        bail!("no video frames under {}: {}", root.display(), scan.warnings.join("; "));
    }
    let splits = read_splits(root)?;
    let counts = scan
        .records
        .par_iter()
        .map(|r| video_flow(r, pairing, &opts.params, max_magnitude).with_context(|| format!("video {}", r.video_id)))
        .collect::<Result<Vec<_>>>()?;
    log::info!("computed {} flow fields for {} videos", counts.iter().sum::<usize>(), counts.len());

    let train_images: Vec<PathBuf> = scan
        .records
        .iter()
        .filter(|r| splits.split_of(&r.video_id) == Some(Split::Train))
        .flat_map(|r| (opts.gap_k..r.frame_count).map(|i| r.frame_path(Modality::Flow, i)))
        .collect();
    let mut failure = None;
    let images = train_images.iter().map_while(|p| match load_rgb(p) {
        Ok(img) => Some(img),
        Err(e) => {
            failure = Some(e);
            None
        }
    });
    let mean = compute_mean(images);
    if let Some(e) = failure {
        return Err(e);
    }
    write_mean_image(&root.join(FLOW_MEAN), &mean?)?;
    let meta = FlowMeta {
        gap_k: opts.gap_k,
        max_magnitude,
    };
    let path = root.join(FLOW_META);
    fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(meta)
}

fn compute_mean(images: impl Iterator<Item = image::RgbImage>) -> Result<crate::engine::Tensor<f32>> {
    crate::flow::compute_flow_mean_image(images).context("no train-split flow images to average")
}

pub fn read_flow_meta(root: &Path) -> Result<FlowMeta> {
    let path = root.join(FLOW_META);
    ensure!(path.is_file(), "{} not found; run `flow` first", path.display());
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Renders `pose_img/` for every video with annotations; frames without an
/// annotation line render black.
pub fn pose_raster(root: &Path, threshold: f64) -> Result<usize> {
    let scan = scan_dataset(root)?;
    let counts = scan
        .records
        .par_iter()
        .map(|r| -> Result<usize> {
            let path = r.pose_file();
            if !path.is_file() {
                log::warn!("video {} has no pose annotations at {}", r.video_id, path.display());
                return Ok(0);
            }
            let frames = parse_pose_file(&path)?;
            let dir = r.dir.join(Modality::Pose.image_dir());
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let mut next = frames.iter().peekable();
            for i in 0..r.frame_count {
                let empty = PoseFrame {
                    frame_index: i,
                    persons: Vec::new(),
                };
                while next.peek().is_some_and(|f| f.frame_index < i) {
                    next.next();
                }
                let frame = match next.peek() {
                    Some(f) if f.frame_index == i => *f,
                    _ => &empty,
                };
                let out = r.frame_path(Modality::Pose, i);
                rasterize_pose(frame, r.width as usize, r.height as usize, threshold)
                    .save(&out)
                    .with_context(|| format!("writing {}", out.display()))?;
            }
            Ok(r.frame_count)
        })
        .collect::<Result<Vec<_>>>()?;
    let total = counts.iter().sum();
    log::info!("rendered {total} pose images");
    Ok(total)
}

/// Decoded frames and chunk descriptors of one split for one model config.
pub struct SplitData {
    pub cache: FrameCache,
    pub chunks: Vec<ClipDescriptor>,
    pub video_ids: Vec<String>,
}

pub fn load_split(scan: &Scan, splits: &SplitAssignment, split: Split, config: &ModelConfig) -> Result<SplitData> {
    let modalities: Vec<Modality> = config.streams.iter().map(|s| s.modality()).collect();
    let gap = if config.has_flow() { config.gap_k } else { 0 };
    let records: Vec<VideoRecord> = scan
        .records
        .iter()
        .filter(|r| splits.split_of(&r.video_id) == Some(split))
        .cloned()
        .collect();
    for r in &records {
        for &m in &modalities {
            ensure!(
                r.has(m),
                "video {} lacks the {m} modality ({} missing)",
                r.video_id,
                r.dir.join(m.image_dir()).display()
            );
        }
    }
    let chunks: Vec<ClipDescriptor> = records.iter().flat_map(|r| chunk_video(r, gap).clips).collect();
    let cache = FrameCache::load(&records, &modalities, config.input_size, gap)?;
    Ok(SplitData {
        cache,
        chunks,
        video_ids: records.iter().map(|r| r.video_id.clone()).collect(),
    })
}

impl SplitData {
    pub fn clips(&self, config: &ModelConfig, norm: &Normalization) -> Result<Vec<Clip>> {
        let modalities: Vec<Modality> = config.streams.iter().map(|s| s.modality()).collect();
        self.chunks
            .iter()
            .map(|d| Ok(self.cache.clip(d, &modalities, norm)?))
            .collect()
    }
}

fn normalization(root: &Path, config: &ModelConfig, rgb_mean: [f32; 3]) -> Result<Normalization> {
    let mut norm = Normalization {
        rgb_mean,
        flow_mean: None,
    };
    if config.has_flow() {
        check_flow_gap(root, config)?;
        let mean = read_mean_image(&root.join(FLOW_MEAN))?;
        let (h, w) = config.input_size;
        norm = norm.with_flow_mean(&mean, w, h);
    }
    Ok(norm)
}

fn check_flow_gap(root: &Path, config: &ModelConfig) -> Result<()> {
    if !config.has_flow() {
        return Ok(());
    }
    let meta = read_flow_meta(root)?;
    ensure!(
        meta.gap_k == config.gap_k,
        "flow images were computed with gap_k {} but {} expects {}; rerun `flow --gap-k {}`",
        meta.gap_k,
        config.name,
        config.gap_k,
        config.gap_k
    );
    Ok(())
}

fn check_classes(scan: &Scan, config: &ModelConfig) -> Result<()> {
    ensure!(
        scan.classes.len() == config.class_count,
        "dataset has {} classes but the model has {}",
        scan.classes.len(),
        config.class_count
    );
    Ok(())
}

pub struct TrainOutcome {
    pub model: Model,
    pub report: TrainReport,
}

/// Builds `config` from `model_seed`, trains on the train split (validating
/// on val each epoch) and optionally writes the epoch log as CSV.
pub fn train_model(
    root: &Path,
    config: ModelConfig,
    model_seed: u64,
    train_config: &TrainConfig,
    log_path: Option<&Path>,
) -> Result<TrainOutcome> {
    let scan = scan_dataset(root)?;
    check_classes(&scan, &config)?;
    check_flow_gap(root, &config)?;
    let splits = read_splits(root)?;
    let mut model = build_model(config, model_seed)?;
    let train_data = load_split(&scan, &splits, Split::Train, &model.config)?;
    ensure!(!train_data.chunks.is_empty(), "the train split has no complete chunks");
    let rgb_mean = if model.config.has_stream(crate::models::StreamKind::Rgb) {
        rgb_channel_mean(&train_data.cache, train_data.video_ids.iter().map(String::as_str))
    } else {
        [0.0; 3]
    };
    model.rgb_mean = rgb_mean;
    let norm = normalization(root, &model.config, rgb_mean)?;
    let train_clips = train_data.clips(&model.config, &norm)?;
    drop(train_data);
    let val_clips = load_split(&scan, &splits, Split::Val, &model.config)?.clips(&model.config, &norm)?;
    log::info!(
        "training {} on {} train clips, {} val clips, {} parameters",
        model.config.name,
        train_clips.len(),
        val_clips.len(),
        model.config.parameter_count()
    );
    let mut log_file = match log_path {
        Some(p) => {
            let mut f = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
            writeln!(f, "epoch,mean_loss,val_unit_acc")?;
            Some(f)
        }
        None => None,
    };
    let mut log_err = None;
    let report = train(&mut model, &train_clips, &val_clips, train_config, |e| {
        if let Some(f) = log_file.as_mut() {
            if let Err(err) = writeln!(f, "{}", e.csv_line()) {
                log_err.get_or_insert(err);
            }
        }
    })?;
    if let Some(e) = log_err {
        return Err(e).context("writing the training log");
    }
    if let Some(mut f) = log_file {
        f.flush()?;
    }
    Ok(TrainOutcome { model, report })
}

/// Per-unit and per-video metrics of `model` on one split.
pub fn evaluate_model(root: &Path, model: &Model, split: Split, loss_curve: Vec<f64>) -> Result<Metrics> {
    let scan = scan_dataset(root)?;
    check_classes(&scan, &model.config)?;
    let splits = read_splits(root)?;
    let norm = normalization(root, &model.config, model.rgb_mean)?;
    let clips = load_split(&scan, &splits, split, &model.config)?.clips(&model.config, &norm)?;
    ensure!(!clips.is_empty(), "the {split} split has no complete chunks");
    let preds = evaluate_units(model, &clips)?;
    let names: Vec<String> = scan.classes.iter().map(|c| c.name.clone()).collect();
    Ok(Metrics::from_predictions(&model.config.name, &names, &preds, loss_curve)?)
}

/// Reads the loss column of a training log written by [`train_model`].
pub fn read_loss_curve(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .skip(1)
        .map(|l| {
            let loss = l.split(',').nth(1).with_context(|| format!("{}: bad line {l:?}", path.display()))?;
            loss.parse::<f64>()
                .with_context(|| format!("{}: bad loss {loss:?}", path.display()))
        })
        .collect()
}

pub fn write_metrics(path: &Path, metrics: &Metrics) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(metrics)? + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_metrics(path: &Path) -> Result<Metrics> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
