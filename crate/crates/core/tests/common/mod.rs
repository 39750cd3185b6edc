//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the engine's kernels: the oracles are direct
//! nested loops over the defining sums.

#![allow(dead_code)]

use dancestream::engine::{Graph, NodeId, ParameterSet, Real, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Direct 3D convolution over `[N,C,T,H,W]` with per-axis stride/padding.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv3d(
    x: &[f64],
    xs: [usize; 5],
    k: &[f64],
    ks: [usize; 5],
    bias: &[f64],
    stride: [usize; 3],
    pad: [usize; 3],
) -> (Vec<f64>, [usize; 5]) {
    let [n, c, t, h, w] = xs;
    let [f, _, kt, kh, kw] = ks;
    let ot = (t + 2 * pad[0] - kt) / stride[0] + 1;
    let oh = (h + 2 * pad[1] - kh) / stride[1] + 1;
    let ow = (w + 2 * pad[2] - kw) / stride[2] + 1;
    let mut out = vec![0.0; n * f * ot * oh * ow];
    for b in 0..n {
        for fi in 0..f {
            for zt in 0..ot {
                for zh in 0..oh {
                    for zw in 0..ow {
                        let mut acc = bias[fi];
                        for ci in 0..c {
                            for dt in 0..kt {
                                for dh in 0..kh {
                                    for dw in 0..kw {
                                        let ti = (zt * stride[0] + dt) as i64 - pad[0] as i64;
                                        let hi = (zh * stride[1] + dh) as i64 - pad[1] as i64;
                                        let wi = (zw * stride[2] + dw) as i64 - pad[2] as i64;
                                        if ti < 0 || hi < 0 || wi < 0 || ti >= t as i64 || hi >= h as i64 || wi >= w as i64 {
                                            continue;
                                        }
                                        let xv = x[(((b * c + ci) * t + ti as usize) * h + hi as usize) * w + wi as usize];
                                        let kv = k[(((fi * c + ci) * kt + dt) * kh + dh) * kw + dw];
                                        acc += xv * kv;
                                    }
                                }
                            }
                        }
                        out[(((b * f + fi) * ot + zt) * oh + zh) * ow + zw] = acc;
                    }
                }
            }
        }
    }
    (out, [n, f, ot, oh, ow])
}

/// Direct 2D convolution via the 3D oracle with a unit time axis.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv2d(
    x: &[f64],
    xs: [usize; 4],
    k: &[f64],
    ks: [usize; 4],
    bias: &[f64],
    stride: usize,
    pad: usize,
) -> (Vec<f64>, [usize; 4]) {
    let (out, s) = naive_conv3d(
        x,
        [xs[0], xs[1], 1, xs[2], xs[3]],
        k,
        [ks[0], ks[1], 1, ks[2], ks[3]],
        bias,
        [1, stride, stride],
        [0, pad, pad],
    );
    (out, [s[0], s[1], s[3], s[4]])
}

/// Windowed max over `[N,C,T,H,W]`.
pub fn naive_maxpool3d(x: &[f64], xs: [usize; 5], window: [usize; 3], stride: [usize; 3]) -> (Vec<f64>, [usize; 5]) {
    let [n, c, t, h, w] = xs;
    let ot = (t - window[0]) / stride[0] + 1;
    let oh = (h - window[1]) / stride[1] + 1;
    let ow = (w - window[2]) / stride[2] + 1;
    let mut out = Vec::new();
    for plane in 0..n * c {
        for zt in 0..ot {
            for zh in 0..oh {
                for zw in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    for dt in 0..window[0] {
                        for dh in 0..window[1] {
                            for dw in 0..window[2] {
                                let v = x[((plane * t + zt * stride[0] + dt) * h + zh * stride[1] + dh) * w
                                    + zw * stride[2]
                                    + dw];
                                best = best.max(v);
                            }
                        }
                    }
                    out.push(best);
                }
            }
        }
    }
    (out, [n, c, ot, oh, ow])
}

pub fn naive_matmul(a: &[f64], n: usize, d: usize, b: &[f64], k: usize, bias: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        for j in 0..k {
            let mut acc = bias[j];
            for l in 0..d {
                acc += a[i * d + l] * b[l * k + j];
            }
            out[i * k + j] = acc;
        }
    }
    out
}

pub fn random_vec<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Relative error with a small absolute floor on the denominator.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(&x, &y)| rel_err(x, y)).fold(0.0, f64::max)
}

pub fn to_f64<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GradReport {
    /// Worst relative error over compared coordinates.
    pub worst: f64,
    pub checked: usize,
    /// Coordinates whose ±step segment crosses a ReLU or max-pool switch,
    /// where the loss has no derivative to compare against.
    pub straddling: usize,
}

/// Central finite-difference check of sampled coordinates of every
/// parameter. `loss_fn` builds a fresh graph and returns the scalar loss
/// node. A coordinate is compared only when the switch pattern is the same
/// at `x - step`, `x` and `x + step`; straddling draws are replaced by new
/// ones.
pub fn grad_check_report<F>(params: &ParameterSet<f64>, step: f64, samples_per_param: usize, seed: u64, loss_fn: F) -> GradReport
where
    F: Fn(&mut Graph<f64>, &ParameterSet<f64>) -> NodeId,
{
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut analytic = params.clone();
    analytic.clear_grads();
    let mut g = Graph::new();
    let loss = loss_fn(&mut g, &analytic);
    let pattern = g.switch_pattern();
    g.backward(loss, &mut analytic).expect("backward");

    let eval = |p: &ParameterSet<f64>| {
        let mut g = Graph::new();
        let l = loss_fn(&mut g, p);
        (g.value(l).values()[0], g.switch_pattern())
    };

    let mut report = GradReport::default();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let len = params.get(&name).unwrap().len();
        let zeros = vec![0.0; len];
        let grad = analytic.get(&name).unwrap().grad().unwrap_or(&zeros).to_vec();
        let want = samples_per_param.min(len);
        let mut candidates: Vec<usize> = if len <= samples_per_param {
            (0..len).collect()
        } else {
            (0..50 * samples_per_param).map(|_| rng.gen_range(0..len)).collect()
        };
        candidates.reverse();
        let mut done = 0;
        while done < want {
            let Some(i) = candidates.pop() else { break };
            let mut plus = params.clone();
            plus.get_mut(&name).unwrap().values_mut()[i] += step;
            let mut minus = params.clone();
            minus.get_mut(&name).unwrap().values_mut()[i] -= step;
            let ((fp, pp), (fm, pm)) = (eval(&plus), eval(&minus));
            if pp != pattern || pm != pattern {
                report.straddling += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * step);
            report.worst = report.worst.max(rel_err(grad[i], numeric));
            report.checked += 1;
            done += 1;
        }
        assert!(done > 0, "{name}: every sampled coordinate straddles a switch");
    }
    report
}

pub fn grad_check<F>(params: &ParameterSet<f64>, step: f64, samples_per_param: usize, seed: u64, loss_fn: F) -> f64
where
    F: Fn(&mut Graph<f64>, &ParameterSet<f64>) -> NodeId,
{
    grad_check_report(params, step, samples_per_param, seed, loss_fn).worst
}

/// Reduces any node to a scalar through a fixed random projection.
pub fn project_to_scalar(g: &mut Graph<f64>, node: NodeId, seed: u64) -> NodeId {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let len = g.value(node).len();
    let flat = g.reshape(node, &[1, len]).unwrap();
    let w = g.input(Tensor::new(&[len, 1], random_vec(&mut rng, len)).unwrap());
    let b = g.input(Tensor::new(&[1], vec![0.0]).unwrap());
    g.linear(flat, w, b).unwrap()
}

/// Writes `<root>/<class>/<class>_<v>/frames/%06d.png` with a frame-indexed
/// pattern, `videos` per class.
pub fn write_frame_tree(root: &std::path::Path, classes: &[&str], videos: usize, frames: usize, size: u32) {
    for (ci, class) in classes.iter().enumerate() {
        for v in 0..videos {
            let dir = root.join(class).join(format!("{class}_{v:03}")).join("frames");
            std::fs::create_dir_all(&dir).unwrap();
            for f in 0..frames {
                let img = image::RgbImage::from_fn(size, size, |x, y| {
                    image::Rgb([(x * 7 + f as u32 * 3) as u8, (y * 5 + v as u32) as u8, (ci * 60) as u8])
                });
                img.save(dir.join(format!("{f:06}.png"))).unwrap();
            }
        }
    }
}

/// A clip carrying random `[3,16,H,W]` tensors for every stream of `config`.
pub fn random_clip(config: &dancestream::models::ModelConfig, seed: u64, video_id: &str, label: usize) -> dancestream::dataset::Clip {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = config.input_size;
    let mut clip = dancestream::dataset::Clip {
        video_id: video_id.to_string(),
        start_frame: 0,
        label: dancestream::dataset::ClassLabel {
            index: label,
            name: format!("c{label}"),
        },
        rgb: None,
        flow: None,
        pose: None,
    };
    for s in &config.streams {
        let t = Tensor::from_fn(&[3, 16, h, w], |_| rng.gen_range(-1.0f32..1.0));
        match s.modality() {
            dancestream::dataset::Modality::Rgb => clip.rgb = Some(t),
            dancestream::dataset::Modality::Flow => clip.flow = Some(t),
            dancestream::dataset::Modality::Pose => clip.pose = Some(t),
        }
    }
    clip
}

/// Worst finite-difference error over sampled parameters of a whole model,
/// evaluated in f64 on two random clips.
pub fn model_grad_error(config: &dancestream::models::ModelConfig, seed: u64, samples_per_param: usize) -> GradReport {
    use dancestream::models::{assemble_batch, build_model, forward, UnitRef};
    let model = build_model(config.clone(), seed).expect("valid config");
    let clips = [random_clip(config, seed + 1, "a", 0), random_clip(config, seed + 2, "b", 1)];
    let units: Vec<UnitRef> = clips.iter().map(|c| UnitRef::new(c, config, 3)).collect();
    let units: Vec<UnitRef> = if config.temporal_mode == dancestream::models::TemporalMode::SingleFrame {
        units
    } else {
        clips.iter().map(|c| UnitRef::new(c, config, 0)).collect()
    };
    let batch = assemble_batch(config, &units).unwrap().cast::<f64>();
    let mut params = model.params.cast::<f64>();
    // Zero biases put units fed only by dead ReLUs exactly on a kink;
    // check at a generic point instead.
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 3);
    for (name, t) in params.iter_mut() {
        if name.ends_with(".bias") {
            t.values_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        }
    }
    grad_check_report(&params, 1e-3, samples_per_param, seed, |g, p| {
        let nodes = forward(config, g, p, &batch).unwrap();
        g.softmax_xent(nodes.logits, &batch.labels).unwrap()
    })
}

/// A preset at `size × size` inputs with same padding, so 8×8 frames
/// survive both stages.
pub fn tiny_preset(preset: dancestream::models::Preset, size: usize) -> dancestream::models::ModelConfig {
    let mut cfg = preset.config(3, (size, size));
    cfg.same_padding = true;
    cfg
}

/// Periodic band-limited texture: a sum of low-frequency sinusoids that can
/// be evaluated at any real offset, giving exact ground truth for shifts.
pub struct Texture {
    size: usize,
    waves: Vec<(f64, f64, f64, f64)>,
}

impl Texture {
    pub fn new(size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves = (0..12)
            .map(|_| {
                let kx = rng.gen_range(-4i32..=4) as f64;
                let ky = rng.gen_range(-4i32..=4) as f64;
                (kx, ky, rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(5.0..15.0))
            })
            .filter(|w| w.0 != 0.0 || w.1 != 0.0)
            .collect();
        Self { size, waves }
    }

    pub fn render(&self, shift_x: f64, shift_y: f64) -> Tensor<f32> {
        let n = self.size;
        Tensor::from_fn(&[n, n], |i| {
            let (x, y) = ((i % n) as f64 - shift_x, (i / n) as f64 - shift_y);
            let w = std::f64::consts::TAU / n as f64;
            let v: f64 = self
                .waves
                .iter()
                .map(|&(kx, ky, ph, a)| a * (w * (kx * x + ky * y) + ph).cos())
                .sum();
            (128.0 + v) as f32
        })
    }
}
