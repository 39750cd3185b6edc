//! Command-line interface. Exit codes: 0 success, 1 runtime failure,
//! 2 invalid usage.

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::dataset::synth::{synth_generate, SynthConfig};
use crate::dataset::Split;
use crate::flow::FlowParams;
use crate::models::{load_model, save_model, Preset};
use crate::pipeline::{self, stage_seed, FlowOptions, Stage};
use crate::pose::DEFAULT_CONF_THRESHOLD;
use crate::training::{emit_report, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "dancestream", version, about = "Multi-stream motion-centric video classification")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Global seed; stages derive their own seeds from it by fixed offsets.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Worker threads. Affects wall time only.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DataArg {
    /// Dataset root.
    #[arg(long, env = "LETSDANCE_DATA")]
    pub data: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Index the dataset and write videos.tsv.
    Scan(DataArg),
    /// Assign videos to train/val/test and write splits.tsv.
    Split(DataArg),
    /// Compute k-gap optical flow, flow images and the train-split flow mean.
    Flow {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, default_value_t = 1)]
        gap_k: usize,
        /// Flow-image range in pixels [default: 2 (gap_k + 1)].
        #[arg(long)]
        max_mag: Option<f64>,
    },
    /// Render pose annotations into pose images.
    PoseRaster {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, default_value_t = DEFAULT_CONF_THRESHOLD)]
        threshold: f64,
    },
    /// Generate the motion-only and appearance+motion synthetic suites.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 100)]
        clips: usize,
        #[arg(long, default_value_t = 32)]
        canvas: usize,
        #[arg(long, default_value_t = 32)]
        frames: usize,
    },
    /// Train a preset and save its checkpoint.
    Train {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, value_parser = parse_preset)]
        preset: Preset,
        /// Checkpoint path; the epoch log goes to <out>.log.csv.
        #[arg(long)]
        out: PathBuf,
        /// Square input size.
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f32,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        /// Flow gap override [default: the preset's].
        #[arg(long)]
        gap_k: Option<usize>,
    },
    /// Evaluate a checkpoint on one split and write metrics JSON.
    Eval {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collate metrics files into report.txt, report.csv and confusion files.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        metrics: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: crate::models::ModelError| e.to_string())
}

fn log_path(model: &std::path::Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".log.csv");
    PathBuf::from(s)
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Scan(d) => {
            pipeline::scan(&d.data)?;
        }
        Command::Split(d) => {
            pipeline::split(&d.data, stage_seed(cli.seed, Stage::Split))?;
        }
        Command::Flow { data, gap_k, max_mag } => {
            pipeline::flow(
                &data.data,
                &FlowOptions {
                    gap_k: *gap_k,
                    max_magnitude: *max_mag,
                    params: FlowParams::default(),
                },
            )?;
        }
        Command::PoseRaster { data, threshold } => {
            pipeline::pose_raster(&data.data, *threshold)?;
        }
        Command::Synth {
            out,
            classes,
            clips,
            canvas,
            frames,
        } => {
            let cfg = SynthConfig {
                classes: *classes,
                clips_per_class: *clips,
                canvas: *canvas,
                frames_per_clip: *frames,
                seed: stage_seed(cli.seed, Stage::Synth),
                ..SynthConfig::default()
            };
            let s = synth_generate(&cfg, out)?;
            log::info!("wrote {} videos, {} frames under {}", s.videos, s.frames, out.display());
        }
        Command::Train {
            data,
            preset,
            out,
            size,
            epochs,
            lr,
            batch_size,
            gap_k,
        } => {
            let scan = crate::dataset::scan_dataset(&data.data)?;
            let mut config = preset.config(scan.classes.len(), (*size, *size));
            if let Some(k) = gap_k {
                config.gap_k = *k;
            }
            let tc = TrainConfig {
                learning_rate: *lr,
                epochs: *epochs,
                batch_size: *batch_size,
                seed: stage_seed(cli.seed, Stage::Shuffle),
                ..TrainConfig::default()
            };
            log::info!("model config: {config:?}");
            log::info!("train config: {tc:?}");
            let outcome = pipeline::train_model(
                &data.data,
                config,
                stage_seed(cli.seed, Stage::ModelInit),
                &tc,
                Some(&log_path(out)),
            )?;
            save_model(&outcome.model, out)?;
            log::info!("saved {}", out.display());
        }
        Command::Eval {
            data,
            model,
            split,
            out,
        } => {
            let m = load_model(model).with_context(|| format!("loading {}", model.display()))?;
            let log = log_path(model);
            let curve = if log.is_file() {
                pipeline::read_loss_curve(&log)?
            } else {
                Vec::new()
            };
            let metrics = pipeline::evaluate_model(&data.data, &m, *split, curve)?;
            log::info!(
                "{}: unit accuracy {:.4}, video accuracy {:.4}",
                metrics.variant,
                metrics.per_unit_accuracy,
                metrics.per_video_accuracy
            );
            pipeline::write_metrics(out, &metrics)?;
        }
        Command::Report { metrics, out } => {
            let all = metrics
                .iter()
                .map(|p| pipeline::read_metrics(p))
                .collect::<Result<Vec<_>>>()?;
            emit_report(&all, out)?;
            log::info!("wrote report for {} variants to {}", all.len(), out.display());
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    log::info!("resolved configuration: {cli:?}");
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs as usize).build() {
        Ok(p) => p,
        Err(e) => {
            log::error!("cannot start {} workers: {e}", cli.jobs);
            return 1;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e:#}");
            eprintln!("error: {e:#}");
            1
        }
    }
}
