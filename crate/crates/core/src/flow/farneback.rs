//! Coarse-to-fine displacement estimation from polynomial expansions.
//!
//! For a displacement `d`, the expansion of the second frame sampled at
//! `p + d̃` satisfies `A·d = Δb` with `A = (A₁ + A₂)/2` and
//! `Δb = -(b₂ - b₁)/2 + A·d̃`. The normal equations `AᵀA`, `AᵀΔb` are
//! averaged over a Gaussian window before solving, and the solve is
//! regularized by `εI`.

use crate::engine::Tensor;

use super::expansion::{expand_plane, gaussian_weights, PolyCoeffs};
use super::pyramid::{blur, resize, sample};
use super::{plane_dims, FlowError, FlowField, FlowParams};

const REGULARIZATION: f64 = 1e-6;

pub fn estimate_flow(frame_a: &Tensor<f32>, frame_b: &Tensor<f32>, params: &FlowParams) -> Result<FlowField, FlowError> {
    if frame_a.shape() != frame_b.shape() {
        return Err(FlowError::DimensionMismatch(
            frame_a.shape().to_vec(),
            frame_b.shape().to_vec(),
        ));
    }
    let (w, h) = plane_dims(frame_a)?;
    params.validate(w, h)?;
    let a: Vec<f64> = frame_a.values().iter().map(|&v| v as f64).collect();
    let b: Vec<f64> = frame_b.values().iter().map(|&v| v as f64).collect();

    let mut flow: Option<(Vec<f64>, Vec<f64>, usize, usize)> = None;
    for level in (0..params.pyramid_levels).rev() {
        let (lw, lh) = params.level_dims(w, h, level);
        let scale = params.pyramid_scale.powi(level as i32);
        let sigma = (1.0 / scale - 1.0) * 0.5;
        let pa = resize(&blur(&a, w, h, sigma), w, h, lw, lh);
        let pb = resize(&blur(&b, w, h, sigma), w, h, lw, lh);
        let ea = expand_plane(&pa, lw, lh, params.window_radius, params.poly_sigma);
        let eb = expand_plane(&pb, lw, lh, params.window_radius, params.poly_sigma);

        let (mut dx, mut dy) = match flow.take() {
            None => (vec![0.0; lw * lh], vec![0.0; lw * lh]),
            Some((fx, fy, pw, ph)) => {
                let rx = lw as f64 / pw as f64;
                let ry = lh as f64 / ph as f64;
                let ux = resize(&fx, pw, ph, lw, lh).into_iter().map(|v| v * rx).collect();
                let uy = resize(&fy, pw, ph, lw, lh).into_iter().map(|v| v * ry).collect();
                (ux, uy)
            }
        };
        for _ in 0..params.iterations {
            refine(&ea, &eb, &mut dx, &mut dy, params.window_radius);
        }
        flow = Some((dx, dy, lw, lh));
    }

    let (dx, dy, _, _) = flow.expect("at least one level");
    let finite = |v: f64| if v.is_finite() { v as f32 } else { 0.0 };
    Ok(FlowField {
        width: w,
        height: h,
        dx: dx.into_iter().map(finite).collect(),
        dy: dy.into_iter().map(finite).collect(),
    })
}

/// One update of the displacement field at a single pyramid level.
fn refine(ea: &PolyCoeffs, eb: &PolyCoeffs, dx: &mut [f64], dy: &mut [f64], radius: usize) {
    let (w, h) = (ea.width, ea.height);
    // Per-pixel normal equations: [g11, g12, g22, h1, h2].
    let mut eqs = vec![[0.0f64; 5]; w * h];
    let field = |coeffs: &PolyCoeffs, k: usize| -> Vec<f64> {
        (0..w * h)
            .map(|i| match k {
                0..=2 => coeffs.a[i][k],
                _ => coeffs.b[i][k - 3],
            })
            .collect()
    };
    let b_fields: Vec<Vec<f64>> = (0..5).map(|k| field(eb, k)).collect();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (px, py) = (x as f64 + dx[i], y as f64 + dy[i]);
            let s = |k: usize| sample(&b_fields[k], w, h, px, py);
            let [a11, a12, a22] = ea.a[i];
            let m11 = 0.5 * (a11 + s(0));
            let m12 = 0.5 * (a12 + s(1));
            let m22 = 0.5 * (a22 + s(2));
            let db1 = -0.5 * (s(3) - ea.b[i][0]) + m11 * dx[i] + m12 * dy[i];
            let db2 = -0.5 * (s(4) - ea.b[i][1]) + m12 * dx[i] + m22 * dy[i];
            eqs[i] = [
                m11 * m11 + m12 * m12,
                m11 * m12 + m12 * m22,
                m12 * m12 + m22 * m22,
                m11 * db1 + m12 * db2,
                m12 * db1 + m22 * db2,
            ];
        }
    }
    let avg = average(&eqs, w, h, radius);
    for i in 0..w * h {
        let [g11, g12, g22, h1, h2] = avg[i];
        let (g11, g22) = (g11 + REGULARIZATION, g22 + REGULARIZATION);
        let det = g11 * g22 - g12 * g12;
        if det.abs() > f64::MIN_POSITIVE {
            dx[i] = (g22 * h1 - g12 * h2) / det;
            dy[i] = (g11 * h2 - g12 * h1) / det;
        }
    }
}

/// Gaussian-weighted window average with replicated borders.
fn average(eqs: &[[f64; 5]], w: usize, h: usize, radius: usize) -> Vec<[f64; 5]> {
    let sigma = 0.3 * (2 * radius + 1) as f64;
    let weights = gaussian_weights(radius, sigma);
    let r = radius as i64;
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![[0.0; 5]; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 5];
            for (d, k) in (-r..=r).zip(&weights) {
                let e = eqs[y * w + clamp(x as i64 + d, w)];
                (0..5).for_each(|j| acc[j] += k * e[j]);
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![[0.0; 5]; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 5];
            for (d, k) in (-r..=r).zip(&weights) {
                let e = tmp[clamp(y as i64 + d, h) * w + x];
                (0..5).for_each(|j| acc[j] += k * e[j]);
            }
            out[y * w + x] = acc;
        }
    }
    out
}
