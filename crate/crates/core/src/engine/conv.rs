//! Convolution kernels over `[N, C, T, H, W]` volumes via im2col + GEMM.
//!
//! 2D convolution is the `T = kt = 1` case of the same kernels.

use super::real::Real;
use super::EngineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub in_dims: [usize; 3],
    pub filters: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub out_dims: [usize; 3],
}

/// `floor((extent + 2*pad - window) / stride) + 1`, or `None` when the
/// window does not fit.
pub fn output_extent(extent: usize, window: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = extent + 2 * pad;
    if window == 0 || stride == 0 || window > padded {
        return None;
    }
    Some((padded - window) / stride + 1)
}

impl ConvGeometry {
    pub fn new(
        input: &[usize; 5],
        kernel: &[usize; 5],
        stride: [usize; 3],
        padding: [usize; 3],
        shapes: (&[usize], &[usize]),
    ) -> Result<Self, EngineError> {
        if stride.contains(&0) {
            return Err(EngineError::InvalidStride(stride.to_vec()));
        }
        if input[1] != kernel[1] {
            return Err(EngineError::shape("conv: channel count", shapes.0, shapes.1));
        }
        let mut out_dims = [0; 3];
        for axis in 0..3 {
            out_dims[axis] = output_extent(input[2 + axis], kernel[2 + axis], stride[axis], padding[axis])
                .ok_or_else(|| EngineError::shape("conv: kernel larger than input", shapes.0, shapes.1))?;
        }
        Ok(Self {
            batch: input[0],
            in_channels: input[1],
            in_dims: [input[2], input[3], input[4]],
            filters: kernel[0],
            kernel: [kernel[2], kernel[3], kernel[4]],
            stride,
            padding,
            out_dims,
        })
    }

    /// Rows of the column matrix: `C * kt * kh * kw`.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel.iter().product::<usize>()
    }

    /// Columns of the column matrix: output positions per sample.
    pub fn positions(&self) -> usize {
        self.out_dims.iter().product()
    }

    pub fn sample_len(&self) -> usize {
        self.in_channels * self.in_dims.iter().product::<usize>()
    }
}

/// Unfolds one sample into a `[patch_len, positions]` row-major matrix.
fn im2col<T: Real>(input: &[T], g: &ConvGeometry, cols: &mut [T]) {
    let [it, ih, iw] = g.in_dims;
    let [kt, kh, kw] = g.kernel;
    let [ot, oh, ow] = g.out_dims;
    let [st, sh, sw] = g.stride;
    let [pt, ph, pw] = g.padding;
    let p = g.positions();
    let mut row = 0;
    for c in 0..g.in_channels {
        let chan = &input[c * it * ih * iw..(c + 1) * it * ih * iw];
        for dt in 0..kt {
            for dh in 0..kh {
                for dw in 0..kw {
                    let dst = &mut cols[row * p..(row + 1) * p];
                    let mut idx = 0;
                    for zt in 0..ot {
                        let t = (zt * st + dt) as isize - pt as isize;
                        for zh in 0..oh {
                            let h = (zh * sh + dh) as isize - ph as isize;
                            let inside = t >= 0 && (t as usize) < it && h >= 0 && (h as usize) < ih;
                            for zw in 0..ow {
                                let w = (zw * sw + dw) as isize - pw as isize;
                                dst[idx] = if inside && w >= 0 && (w as usize) < iw {
                                    chan[(t as usize * ih + h as usize) * iw + w as usize]
                                } else {
                                    T::zero()
                                };
                                idx += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Folds a column matrix back, accumulating into one sample's gradient.
fn col2im<T: Real>(cols: &[T], g: &ConvGeometry, grad: &mut [T]) {
    let [it, ih, iw] = g.in_dims;
    let [kt, kh, kw] = g.kernel;
    let [ot, oh, ow] = g.out_dims;
    let [st, sh, sw] = g.stride;
    let [pt, ph, pw] = g.padding;
    let p = g.positions();
    let mut row = 0;
    for c in 0..g.in_channels {
        let chan = &mut grad[c * it * ih * iw..(c + 1) * it * ih * iw];
        for dt in 0..kt {
            for dh in 0..kh {
                for dw in 0..kw {
                    let src = &cols[row * p..(row + 1) * p];
                    let mut idx = 0;
                    for zt in 0..ot {
                        let t = (zt * st + dt) as isize - pt as isize;
                        for zh in 0..oh {
                            let h = (zh * sh + dh) as isize - ph as isize;
                            let inside = t >= 0 && (t as usize) < it && h >= 0 && (h as usize) < ih;
                            for zw in 0..ow {
                                let w = (zw * sw + dw) as isize - pw as isize;
                                if inside && w >= 0 && (w as usize) < iw {
                                    let at = (t as usize * ih + h as usize) * iw + w as usize;
                                    chan[at] = chan[at] + src[idx];
                                }
                                idx += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Returns the output `[N, F, positions]` and the cached column matrices.
pub fn conv_forward<T: Real>(input: &[T], kernel: &[T], bias: &[T], g: &ConvGeometry) -> (Vec<T>, Vec<T>) {
    let ck = g.patch_len();
    let p = g.positions();
    let f = g.filters;
    let mut cols = vec![T::zero(); g.batch * ck * p];
    let mut out = vec![T::zero(); g.batch * f * p];
    for n in 0..g.batch {
        let sample = &input[n * g.sample_len()..(n + 1) * g.sample_len()];
        let col = &mut cols[n * ck * p..(n + 1) * ck * p];
        im2col(sample, g, col);
        let dst = &mut out[n * f * p..(n + 1) * f * p];
        for (fi, row) in dst.chunks_mut(p).enumerate() {
            row.iter_mut().for_each(|v| *v = bias[fi]);
        }
        T::gemm(f, ck, p, T::one(), kernel, ck as isize, 1, col, p as isize, 1, T::one(), dst, p as isize, 1);
    }
    (out, cols)
}

pub struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub kernel: Vec<T>,
    pub bias: Vec<T>,
}

pub fn conv_backward<T: Real>(
    grad_out: &[T],
    cols: &[T],
    kernel: &[T],
    g: &ConvGeometry,
    need_input: bool,
) -> ConvGrads<T> {
    let ck = g.patch_len();
    let p = g.positions();
    let f = g.filters;
    let mut dkernel = vec![T::zero(); f * ck];
    let mut dbias = vec![T::zero(); f];
    let mut dinput = need_input.then(|| vec![T::zero(); g.batch * g.sample_len()]);
    let mut dcols = if need_input { vec![T::zero(); ck * p] } else { Vec::new() };
    for n in 0..g.batch {
        let dout = &grad_out[n * f * p..(n + 1) * f * p];
        let col = &cols[n * ck * p..(n + 1) * ck * p];
        for (fi, row) in dout.chunks(p).enumerate() {
            dbias[fi] = dbias[fi] + row.iter().copied().sum::<T>();
        }
        // dK += dOut · colsᵀ
        T::gemm(f, p, ck, T::one(), dout, p as isize, 1, col, 1, p as isize, T::one(), &mut dkernel, ck as isize, 1);
        if let Some(dinput) = dinput.as_mut() {
            // dCols = Kᵀ · dOut
            T::gemm(ck, f, p, T::one(), kernel, 1, ck as isize, dout, p as isize, 1, T::zero(), &mut dcols, p as isize, 1);
            col2im(&dcols, g, &mut dinput[n * g.sample_len()..(n + 1) * g.sample_len()]);
        }
    }
    ConvGrads {
        input: dinput,
        kernel: dkernel,
        bias: dbias,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolGeometry {
    pub batch: usize,
    pub channels: usize,
    pub in_dims: [usize; 3],
    pub window: [usize; 3],
    pub stride: [usize; 3],
    pub out_dims: [usize; 3],
}

impl PoolGeometry {
    pub fn new(input: &[usize; 5], window: [usize; 3], stride: [usize; 3]) -> Result<Self, EngineError> {
        if stride.contains(&0) || window.contains(&0) {
            return Err(EngineError::InvalidStride(stride.to_vec()));
        }
        let mut out_dims = [0; 3];
        for axis in 0..3 {
            out_dims[axis] = output_extent(input[2 + axis], window[axis], stride[axis], 0).ok_or(
                EngineError::WindowTooLarge {
                    window: window[axis],
                    extent: input[2 + axis],
                },
            )?;
        }
        Ok(Self {
            batch: input[0],
            channels: input[1],
            in_dims: [input[2], input[3], input[4]],
            window,
            stride,
            out_dims,
        })
    }
}

/// Max pooling; returns values and the flat input index of each maximum.
/// Ties resolve to the first element in scan order.
pub fn maxpool_forward<T: Real>(input: &[T], g: &PoolGeometry) -> (Vec<T>, Vec<usize>) {
    let [it, ih, iw] = g.in_dims;
    let [ot, oh, ow] = g.out_dims;
    let [wt, wh, ww] = g.window;
    let [st, sh, sw] = g.stride;
    let planes = g.batch * g.channels;
    let mut out = Vec::with_capacity(planes * ot * oh * ow);
    let mut arg = Vec::with_capacity(out.capacity());
    for plane in 0..planes {
        let base = plane * it * ih * iw;
        for zt in 0..ot {
            for zh in 0..oh {
                for zw in 0..ow {
                    let mut best = base + ((zt * st) * ih + zh * sh) * iw + zw * sw;
                    for dt in 0..wt {
                        for dh in 0..wh {
                            let row = base + ((zt * st + dt) * ih + zh * sh + dh) * iw + zw * sw;
                            for dw in 0..ww {
                                if input[row + dw] > input[best] {
                                    best = row + dw;
                                }
                            }
                        }
                    }
                    out.push(input[best]);
                    arg.push(best);
                }
            }
        }
    }
    (out, arg)
}
