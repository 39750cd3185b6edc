//! Synthetic motion-defined datasets.
//!
//! Two suites share one trajectory family. In the motion-only suite a gray
//! Gaussian dot moves on a torus with a uniformly random offset, so the
//! per-frame position distribution is uniform for every class and only the
//! trajectory pattern separates them. In the appearance+motion suite the
//! sprite (red disk or green disk with a magenta cross) also varies; the
//! colors share one luminance, so a grayscale flow estimator cannot see it.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::DatasetError;
use crate::pose::{write_pose_file, Joint, PoseFrame, Skeleton, JOINT_COUNT};

const RED: [f64; 3] = [230.0, 87.0, 2.0];
const GREEN: [f64; 3] = [0.0, 190.0, 75.0];
const MAGENTA: [f64; 3] = [204.0, 61.0, 204.0];

/// Smallest supported canvas side.
pub const MIN_CANVAS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    MotionOnly,
    AppearanceMotion,
}

impl Suite {
    pub const ALL: [Suite; 2] = [Suite::MotionOnly, Suite::AppearanceMotion];

    pub fn dir_name(self) -> &'static str {
        match self {
            Suite::MotionOnly => "motion_only",
            Suite::AppearanceMotion => "appearance_motion",
        }
    }

    pub fn class_names(self) -> [&'static str; 4] {
        match self {
            Suite::MotionOnly => ["orbit_cw", "orbit_ccw", "bounce", "zigzag"],
            Suite::AppearanceMotion => ["red_bounce", "red_zigzag", "cross_bounce", "cross_zigzag"],
        }
    }

    fn trajectory(self, class: usize) -> Trajectory {
        match (self, class) {
            (Suite::MotionOnly, 0) => Trajectory::Orbit { clockwise: true },
            (Suite::MotionOnly, 1) => Trajectory::Orbit { clockwise: false },
            (Suite::MotionOnly, 2) | (Suite::AppearanceMotion, 0 | 2) => Trajectory::Bounce,
            _ => Trajectory::Zigzag,
        }
    }

    fn sprite(self, class: usize) -> Sprite {
        match (self, class) {
            (Suite::MotionOnly, _) => Sprite::Dot,
            (Suite::AppearanceMotion, 0 | 1) => Sprite::RedDisk,
            (Suite::AppearanceMotion, _) => Sprite::CrossDisk,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Trajectory {
    Orbit { clockwise: bool },
    /// Horizontal ping-pong.
    Bounce,
    /// Diagonal steps whose vertical sign flips twice as often as the horizontal.
    Zigzag,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Sprite {
    Dot,
    RedDisk,
    CrossDisk,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Classes per suite, 2..=4.
    pub classes: usize,
    pub clips_per_class: usize,
    /// Square canvas side in pixels.
    pub canvas: usize,
    pub frames_per_clip: usize,
    pub seed: u64,
    /// Per-video period (frames per orbit revolution or bounce cycle) is
    /// drawn uniformly from this range.
    pub period_range: (f64, f64),
    /// Per-video orbit radius factor is drawn from `1 ± radius_jitter`.
    pub radius_jitter: f64,
    /// Motion-only suite: per-axis drift velocity drawn from
    /// `[-max_drift, max_drift]` px/frame, moving the pattern around the
    /// torus over the video.
    pub max_drift: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            clips_per_class: 100,
            canvas: 32,
            frames_per_clip: 32,
            seed: 42,
            period_range: (12.0, 20.0),
            radius_jitter: 0.2,
            max_drift: 0.25,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.canvas < MIN_CANVAS {
            return Err(DatasetError::Invalid(format!(
                "canvas {}x{} is too small for the trajectory radius; need at least {MIN_CANVAS}x{MIN_CANVAS}",
                self.canvas, self.canvas
            )));
        }
        if !(2..=4).contains(&self.classes) {
            return Err(DatasetError::Invalid(format!("synthetic suites have 2 to 4 classes, got {}", self.classes)));
        }
        if self.clips_per_class == 0 || self.frames_per_clip == 0 {
            return Err(DatasetError::Invalid("clip and frame counts must be positive".into()));
        }
        let (lo, hi) = self.period_range;
        if !(lo >= 4.0 && hi >= lo && hi.is_finite()) {
            return Err(DatasetError::Invalid(format!("period range {lo}..{hi} must satisfy 4 <= lo <= hi")));
        }
        if !(0.0..0.5).contains(&self.radius_jitter) || !(self.max_drift >= 0.0 && self.max_drift.is_finite()) {
            return Err(DatasetError::Invalid("radius jitter must lie in [0, 0.5) and drift must be >= 0".into()));
        }
        Ok(())
    }

    fn orbit_radius(&self) -> f64 {
        0.15 * self.canvas as f64
    }

    fn dot_sigma(&self) -> f64 {
        0.05 * self.canvas as f64
    }

    fn disk_radius(&self) -> f64 {
        0.12 * self.canvas as f64
    }

    fn rng(&self, suite: Suite, class: usize, clip: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let suite_bit = match suite {
            Suite::MotionOnly => 0u64,
            Suite::AppearanceMotion => 1,
        };
        rng.set_stream((suite_bit << 48) | ((class as u64) << 32) | clip as u64);
        rng
    }
}

/// Sprite centers of one generated video, in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthVideo {
    pub suite: Suite,
    pub class: usize,
    pub positions: Vec<[f64; 2]>,
}

/// Per-video trajectory parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Motion {
    period: f64,
    radius: f64,
    /// Shared per-frame speed: the orbit's arc speed.
    speed: f64,
}

impl Motion {
    fn sample(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let (lo, hi) = cfg.period_range;
        let period = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let j = cfg.radius_jitter;
        let radius = cfg.orbit_radius() * if j > 0.0 { rng.gen_range(1.0 - j..1.0 + j) } else { 1.0 };
        Self {
            period,
            radius,
            speed: 2.0 * PI * radius / period,
        }
    }
}

/// Displacements from the trajectory origin for frames `0..n`.
fn displacements(n: usize, m: Motion, traj: Trajectory, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    match traj {
        Trajectory::Orbit { clockwise } => {
            let theta0 = rng.gen_range(0.0..2.0 * PI);
            let dir = if clockwise { 1.0 } else { -1.0 };
            (0..n)
                .map(|t| {
                    let th = theta0 + dir * 2.0 * PI * t as f64 / m.period;
                    [m.radius * th.cos(), m.radius * th.sin()]
                })
                .collect()
        }
        Trajectory::Bounce | Trajectory::Zigzag => {
            let phase = rng.gen_range(0.0..m.period);
            let flip_x = rng.gen_bool(0.5);
            let flip_y = rng.gen_bool(0.5);
            // Triangle wave: integral of a unit square wave with the given
            // half-period, in [0, half].
            let tri = |t: f64, half: f64, flip: bool| {
                let q = (t + phase) / half;
                let f = q - q.floor();
                let up = (q.floor() as i64 % 2 == 0) != flip;
                half * if up { f } else { 1.0 - f }
            };
            let (v, p) = (m.speed, m.period);
            (0..n)
                .map(|t| {
                    let t = t as f64;
                    match traj {
                        Trajectory::Bounce => [v * tri(t, p / 2.0, flip_x), 0.0],
                        _ => {
                            let d = v / 2f64.sqrt();
                            [d * tri(t, p / 2.0, flip_x), d * tri(t, p / 4.0, flip_y)]
                        }
                    }
                })
                .collect()
        }
    }
}

pub fn generate_video(cfg: &SynthConfig, suite: Suite, class: usize, clip: usize) -> SynthVideo {
    let mut rng = cfg.rng(suite, class, clip);
    let motion = Motion::sample(cfg, &mut rng);
    let disp = displacements(cfg.frames_per_clip, motion, suite.trajectory(class), &mut rng);
    let s = cfg.canvas as f64;
    let positions = match suite {
        Suite::MotionOnly => {
            // A uniform offset on the torus makes every frame's position
            // uniform whatever the trajectory, drift included.
            let d = cfg.max_drift;
            let drift = if d > 0.0 {
                [rng.gen_range(-d..d), rng.gen_range(-d..d)]
            } else {
                [0.0; 2]
            };
            let off = [rng.gen_range(0.0..s), rng.gen_range(0.0..s)];
            disp.iter()
                .enumerate()
                .map(|(t, p)| {
                    let t = t as f64;
                    [(off[0] + p[0] + drift[0] * t).rem_euclid(s), (off[1] + p[1] + drift[1] * t).rem_euclid(s)]
                })
                .collect()
        }
        Suite::AppearanceMotion => {
            // Keep the whole sprite on the canvas.
            let r = cfg.disk_radius() + 1.0;
            let mut off = [0.0; 2];
            for axis in 0..2 {
                let lo = disp.iter().map(|d| d[axis]).fold(f64::INFINITY, f64::min);
                let hi = disp.iter().map(|d| d[axis]).fold(f64::NEG_INFINITY, f64::max);
                let (a, b) = (r - lo, s - r - hi);
                off[axis] = if b > a { rng.gen_range(a..b) } else { (a + b) / 2.0 };
            }
            disp.iter().map(|d| [off[0] + d[0], off[1] + d[1]]).collect()
        }
    };
    SynthVideo { suite, class, positions }
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Renders one frame with the sprite centered at `pos` (pixel centers at
/// integer + 0.5).
pub fn render_frame(cfg: &SynthConfig, suite: Suite, class: usize, pos: [f64; 2]) -> RgbImage {
    let n = cfg.canvas;
    let s = n as f64;
    match suite.sprite(class) {
        Sprite::Dot => {
            let two_var = 2.0 * cfg.dot_sigma().powi(2);
            RgbImage::from_fn(n as u32, n as u32, |x, y| {
                let wrap = |d: f64| {
                    let d = d.rem_euclid(s);
                    d.min(s - d)
                };
                let dx = wrap(x as f64 + 0.5 - pos[0]);
                let dy = wrap(y as f64 + 0.5 - pos[1]);
                let g = to_u8(255.0 * (-(dx * dx + dy * dy) / two_var).exp());
                Rgb([g, g, g])
            })
        }
        sprite => {
            const SS: usize = 4;
            let r = cfg.disk_radius();
            let bar = 0.3 * r;
            RgbImage::from_fn(n as u32, n as u32, |x, y| {
                let mut acc = [0.0f64; 3];
                for sy in 0..SS {
                    for sx in 0..SS {
                        let px = x as f64 + (sx as f64 + 0.5) / SS as f64 - pos[0];
                        let py = y as f64 + (sy as f64 + 0.5) / SS as f64 - pos[1];
                        if px * px + py * py > r * r {
                            continue;
                        }
                        let color = match sprite {
                            Sprite::CrossDisk if px.abs() < bar || py.abs() < bar => MAGENTA,
                            Sprite::CrossDisk => GREEN,
                            _ => RED,
                        };
                        for c in 0..3 {
                            acc[c] += color[c];
                        }
                    }
                }
                let k = (SS * SS) as f64;
                Rgb(acc.map(|v| to_u8(v / k)))
            })
        }
    }
}

/// Sprite center as a fully confident skeleton with every joint coincident.
pub fn degenerate_pose(frame_index: usize, pos: [f64; 2], radius: f64) -> PoseFrame {
    PoseFrame {
        frame_index,
        persons: vec![Skeleton {
            bbox: [pos[0] - radius, pos[1] - radius, 2.0 * radius, 2.0 * radius],
            joints: [Joint {
                x: pos[0],
                y: pos[1],
                confidence: 1.0,
            }; JOINT_COUNT],
        }],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SynthSummary {
    pub videos: usize,
    pub frames: usize,
}

pub fn video_id(suite: Suite, class: usize, clip: usize) -> String {
    format!("{}_{clip:04}", suite.class_names()[class])
}

/// Writes one suite under `root/<suite>/<class>/<video_id>/`.
pub fn generate_suite(cfg: &SynthConfig, suite: Suite, root: &Path) -> Result<SynthSummary, DatasetError> {
    cfg.validate()?;
    let suite_root = root.join(suite.dir_name());
    let jobs: Vec<(usize, usize)> = (0..cfg.classes)
        .flat_map(|c| (0..cfg.clips_per_class).map(move |i| (c, i)))
        .collect();
    let radius = match suite {
        Suite::MotionOnly => 2.0 * cfg.dot_sigma(),
        Suite::AppearanceMotion => cfg.disk_radius(),
    };
    jobs.par_iter().try_for_each(|&(class, clip)| {
        let video = generate_video(cfg, suite, class, clip);
        let dir = suite_root
            .join(suite.class_names()[class])
            .join(video_id(suite, class, clip));
        let frames_dir = dir.join("frames");
        fs::create_dir_all(&frames_dir).map_err(|e| DatasetError::io(&frames_dir, e))?;
        let mut poses = Vec::with_capacity(video.positions.len());
        for (t, &pos) in video.positions.iter().enumerate() {
            let path = frames_dir.join(format!("{t:06}.png"));
            render_frame(cfg, suite, class, pos)
                .save(&path)
                .map_err(|e| DatasetError::Decode {
                    path: path.display().to_string(),
                    msg: e.to_string(),
                })?;
            poses.push(degenerate_pose(t, pos, radius));
        }
        let pose_dir = dir.join("pose");
        fs::create_dir_all(&pose_dir).map_err(|e| DatasetError::io(&pose_dir, e))?;
        write_pose_file(&pose_dir.join(super::POSE_FILE), &poses)
            .map_err(|e| DatasetError::Invalid(e.to_string()))
    })?;
    Ok(SynthSummary {
        videos: jobs.len(),
        frames: jobs.len() * cfg.frames_per_clip,
    })
}

/// Writes both suites under `root`.
pub fn synth_generate(cfg: &SynthConfig, root: &Path) -> Result<SynthSummary, DatasetError> {
    let mut total = SynthSummary::default();
    for suite in Suite::ALL {
        let s = generate_suite(cfg, suite, root)?;
        total.videos += s.videos;
        total.frames += s.frames;
    }
    Ok(total)
}
