use super::expansion::gaussian_weights;

/// Bilinear sample with coordinates clamped to the image.
pub(crate) fn sample(plane: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
    let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Separable normalized Gaussian blur with replicated borders.
pub(crate) fn blur(plane: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return plane.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let weights = gaussian_weights(radius, sigma);
    let norm: f64 = weights.iter().sum();
    let r = radius as i64;
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = (-r..=r)
                .zip(&weights)
                .map(|(d, k)| k * plane[y * w + clamp(x as i64 + d, w)])
                .sum::<f64>()
                / norm;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = (-r..=r)
                .zip(&weights)
                .map(|(d, k)| k * tmp[clamp(y as i64 + d, h) * w + x])
                .sum::<f64>()
                / norm;
        }
    }
    out
}

/// Bilinear resize mapping pixel centers onto pixel centers.
pub(crate) fn resize(plane: &[f64], w: usize, h: usize, nw: usize, nh: usize) -> Vec<f64> {
    if (w, h) == (nw, nh) {
        return plane.to_vec();
    }
    let sx = w as f64 / nw as f64;
    let sy = h as f64 / nh as f64;
    let mut out = Vec::with_capacity(nw * nh);
    for y in 0..nh {
        let fy = (y as f64 + 0.5) * sy - 0.5;
        for x in 0..nw {
            let fx = (x as f64 + 0.5) * sx - 0.5;
            out.push(sample(plane, w, h, fx, fy));
        }
    }
    out
}
