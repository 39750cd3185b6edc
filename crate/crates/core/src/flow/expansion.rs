use crate::engine::Tensor;

use super::{plane_dims, FlowError, FlowParams};

/// Per-pixel coefficients of the local model `f(p) ≈ pᵀAp + bᵀp + c`, with
/// `p = (x, y)` relative to the pixel. `A` is stored as `(a11, a12, a22)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyCoeffs {
    pub width: usize,
    pub height: usize,
    pub a: Vec<[f64; 3]>,
    pub b: Vec<[f64; 2]>,
    pub c: Vec<f64>,
}

impl PolyCoeffs {
    pub fn matrix(&self, i: usize) -> [[f64; 2]; 2] {
        let [a11, a12, a22] = self.a[i];
        [[a11, a12], [a12, a22]]
    }
}

pub(crate) fn gaussian_weights(radius: usize, sigma: f64) -> Vec<f64> {
    (-(radius as i64)..=radius as i64)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect()
}

/// Solves `m·x = rhs` for a small dense system by Gauss-Jordan elimination
/// with partial pivoting.
fn solve<const N: usize>(mut m: [[f64; N]; N], mut rhs: [[f64; N]; N]) -> [[f64; N]; N] {
    for col in 0..N {
        let pivot = (col..N)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .expect("non-empty");
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        let d = m[col][col];
        for j in 0..N {
            m[col][j] /= d;
            rhs[col][j] /= d;
        }
        for row in 0..N {
            if row != col {
                let f = m[row][col];
                for j in 0..N {
                    m[row][j] -= f * m[col][j];
                    rhs[row][j] -= f * rhs[col][j];
                }
            }
        }
    }
    rhs
}

/// Inverse of the weighted Gram matrix of the basis `1, x, y, x², y², xy`.
fn inverse_gram(weights: &[f64], radius: i64) -> [[f64; 6]; 6] {
    let mut g = [[0.0; 6]; 6];
    for (iy, dy) in (-radius..=radius).enumerate() {
        for (ix, dx) in (-radius..=radius).enumerate() {
            let (x, y) = (dx as f64, dy as f64);
            let basis = [1.0, x, y, x * x, y * y, x * y];
            let w = weights[iy] * weights[ix];
            for i in 0..6 {
                for j in 0..6 {
                    g[i][j] += w * basis[i] * basis[j];
                }
            }
        }
    }
    let mut eye = [[0.0; 6]; 6];
    (0..6).for_each(|i| eye[i][i] = 1.0);
    solve(g, eye)
}

/// Gaussian-weighted least-squares quadratic fit around every pixel.
/// Samples outside the image take the value of the nearest border pixel.
pub fn polynomial_expansion(image: &Tensor<f32>, params: &FlowParams) -> Result<PolyCoeffs, FlowError> {
    let (w, h) = plane_dims(image)?;
    if w < params.min_side() || h < params.min_side() {
        return Err(FlowError::ImageTooSmall {
            width: w,
            height: h,
            radius: params.window_radius,
            needed: params.min_side(),
        });
    }
    let plane: Vec<f64> = image.values().iter().map(|&v| v as f64).collect();
    Ok(expand_plane(&plane, w, h, params.window_radius, params.poly_sigma))
}

pub(crate) fn expand_plane(plane: &[f64], w: usize, h: usize, radius: usize, sigma: f64) -> PolyCoeffs {
    let r = radius as i64;
    let weights = gaussian_weights(radius, sigma);
    let ginv = inverse_gram(&weights, r);
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;

    // Vertical pass: moments of order 0..2 in y.
    let mut vert = vec![[0.0f64; 3]; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut m = [0.0; 3];
            for (k, d) in (-r..=r).enumerate() {
                let v = plane[clamp(y as i64 + d, h) * w + x] * weights[k];
                let d = d as f64;
                m[0] += v;
                m[1] += v * d;
                m[2] += v * d * d;
            }
            vert[y * w + x] = m;
        }
    }

    let mut out = PolyCoeffs {
        width: w,
        height: h,
        a: vec![[0.0; 3]; w * h],
        b: vec![[0.0; 2]; w * h],
        c: vec![0.0; w * h],
    };
    for y in 0..h {
        for x in 0..w {
            // Moments against 1, x, y, x², y², xy.
            let mut m = [0.0; 6];
            for (k, e) in (-r..=r).enumerate() {
                let [v0, v1, v2] = vert[y * w + clamp(x as i64 + e, w)];
                let we = weights[k];
                let e = e as f64;
                m[0] += we * v0;
                m[1] += we * e * v0;
                m[2] += we * v1;
                m[3] += we * e * e * v0;
                m[4] += we * v2;
                m[5] += we * e * v1;
            }
            let mut coef = [0.0; 6];
            for i in 0..6 {
                coef[i] = (0..6).map(|j| ginv[i][j] * m[j]).sum();
            }
            let i = y * w + x;
            out.c[i] = coef[0];
            out.b[i] = [coef[1], coef[2]];
            out.a[i] = [coef[3], coef[5] / 2.0, coef[4]];
        }
    }
    out
}
