//! Forward and backward kernels on raw NCHW buffers.

use super::{Result, Shape, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

pub(crate) fn conv_out_len(len: usize, k: usize, g: ConvGeometry) -> Option<usize> {
    let span = g.dilation * (k - 1) + 1;
    let padded = len + 2 * g.padding;
    if padded < span {
        return None;
    }
    Some((padded - span) / g.stride + 1)
}

pub(crate) fn conv_output_shape(input: Shape, weight: Shape, g: ConvGeometry) -> Result<Shape> {
    let [n, c, h, w] = input;
    let [oc, ic, kh, kw] = weight;
    if c != ic {
        return Err(TensorError::ShapeMismatch { op: "conv2d", left: input, right: weight });
    }
    if kh != kw || !(kh == 1 || kh == 3) {
        return Err(TensorError::precondition("conv2d", format!("kernel must be 1x1 or 3x3, got {kh}x{kw}")));
    }
    if g.stride == 0 || g.dilation == 0 {
        return Err(TensorError::precondition("conv2d", "stride and dilation must be >= 1"));
    }
    let oh = conv_out_len(h, kh, g);
    let ow = conv_out_len(w, kw, g);
    match (oh, ow) {
        (Some(oh), Some(ow)) => Ok([n, oc, oh, ow]),
        _ => Err(TensorError::precondition("conv2d", format!("input {input:?} too small for kernel {weight:?}"))),
    }
}

#[inline]
fn src_index(o: usize, k: usize, g: ConvGeometry, len: usize) -> Option<usize> {
    let pos = (o * g.stride + k * g.dilation) as isize - g.padding as isize;
    (pos >= 0 && (pos as usize) < len).then_some(pos as usize)
}

pub(crate) fn conv2d_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    g: ConvGeometry,
) -> Result<Tensor> {
    let out_shape = conv_output_shape(input.shape(), weight.shape(), g)?;
    let [n, c, h, w] = input.shape();
    let [_, oc, oh, ow] = out_shape;
    let k = weight.shape()[2];
    if let Some(b) = bias {
        if b.numel() != oc {
            return Err(TensorError::ShapeMismatch { op: "conv2d bias", left: weight.shape(), right: b.shape() });
        }
    }
    let inp = input.data();
    let wt = weight.data();
    let mut out = vec![0.0; n * oc * oh * ow];
    for ni in 0..n {
        for o in 0..oc {
            let obase = (ni * oc + o) * oh * ow;
            let plane = &mut out[obase..obase + oh * ow];
            if let Some(b) = bias {
                plane.fill(b.data()[o]);
            }
            for ci in 0..c {
                let ibase = (ni * c + ci) * h * w;
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = wt[((o * c + ci) * k + ky) * k + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        for oy in 0..oh {
                            let Some(iy) = src_index(oy, ky, g, h) else { continue };
                            let row = ibase + iy * w;
                            let orow = oy * ow;
                            for ox in 0..ow {
                                if let Some(ix) = src_index(ox, kx, g, w) {
                                    plane[orow + ox] += wv * inp[row + ix];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(out_shape, out)
}

pub(crate) struct ConvGrads {
    pub input: Vec<f64>,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

pub(crate) fn conv2d_backward(input: &Tensor, weight: &Tensor, grad_out: &[f64], g: ConvGeometry) -> ConvGrads {
    let [n, c, h, w] = input.shape();
    let [oc, _, k, _] = weight.shape();
    let oh = conv_out_len(h, k, g).unwrap_or(0);
    let ow = conv_out_len(w, k, g).unwrap_or(0);
    let inp = input.data();
    let wt = weight.data();
    let mut gi = vec![0.0; inp.len()];
    let mut gw = vec![0.0; wt.len()];
    let mut gb = vec![0.0; oc];
    for ni in 0..n {
        for o in 0..oc {
            let obase = (ni * oc + o) * oh * ow;
            let gplane = &grad_out[obase..obase + oh * ow];
            gb[o] += gplane.iter().sum::<f64>();
            for ci in 0..c {
                let ibase = (ni * c + ci) * h * w;
                for ky in 0..k {
                    for kx in 0..k {
                        let widx = ((o * c + ci) * k + ky) * k + kx;
                        let wv = wt[widx];
                        let mut acc = 0.0;
                        for oy in 0..oh {
                            let Some(iy) = src_index(oy, ky, g, h) else { continue };
                            let row = ibase + iy * w;
                            let orow = oy * ow;
                            for ox in 0..ow {
                                if let Some(ix) = src_index(ox, kx, g, w) {
                                    let go = gplane[orow + ox];
                                    acc += go * inp[row + ix];
                                    gi[row + ix] += go * wv;
                                }
                            }
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
    }
    ConvGrads { input: gi, weight: gw, bias: gb }
}

/// Source coordinate and blend weight for half-pixel (align-corners = false)
/// bilinear sampling.
#[inline]
pub(crate) fn bilinear_taps(dst: usize, in_len: usize, out_len: usize) -> (usize, usize, f64) {
    let scale = in_len as f64 / out_len as f64;
    let src = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
    let i0 = (src.floor() as usize).min(in_len - 1);
    let i1 = (i0 + 1).min(in_len - 1);
    let frac = src - i0 as f64;
    (i0, i1, frac)
}

pub(crate) fn resize_bilinear(input: &Tensor, oh: usize, ow: usize) -> Tensor {
    let [n, c, h, w] = input.shape();
    let ys: Vec<_> = (0..oh).map(|y| bilinear_taps(y, h, oh)).collect();
    let xs: Vec<_> = (0..ow).map(|x| bilinear_taps(x, w, ow)).collect();
    let inp = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = inp[base + y0 * w + x0] * (1.0 - fx) + inp[base + y0 * w + x1] * fx;
                let bot = inp[base + y1 * w + x0] * (1.0 - fx) + inp[base + y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    Tensor::new([n, c, oh, ow], out).expect("resize output length")
}

pub(crate) fn resize_bilinear_backward(in_shape: Shape, grad_out: &[f64], oh: usize, ow: usize) -> Vec<f64> {
    let [n, c, h, w] = in_shape;
    let ys: Vec<_> = (0..oh).map(|y| bilinear_taps(y, h, oh)).collect();
    let xs: Vec<_> = (0..ow).map(|x| bilinear_taps(x, w, ow)).collect();
    let mut gi = vec![0.0; n * c * h * w];
    for plane in 0..n * c {
        let base = plane * h * w;
        let obase = plane * oh * ow;
        for (yi, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (xi, &(x0, x1, fx)) in xs.iter().enumerate() {
                let go = grad_out[obase + yi * ow + xi];
                gi[base + y0 * w + x0] += go * (1.0 - fy) * (1.0 - fx);
                gi[base + y0 * w + x1] += go * (1.0 - fy) * fx;
                gi[base + y1 * w + x0] += go * fy * (1.0 - fx);
                gi[base + y1 * w + x1] += go * fy * fx;
            }
        }
    }
    gi
}

pub(crate) fn check_even(op: &'static str, shape: Shape) -> Result<()> {
    if shape[2] % 2 != 0 || shape[3] % 2 != 0 {
        return Err(TensorError::precondition(op, format!("spatial dims of {shape:?} must be even")));
    }
    Ok(())
}

pub(crate) fn avg_pool2x(input: &Tensor) -> Tensor {
    let [n, c, h, w] = input.shape();
    let (oh, ow) = (h / 2, w / 2);
    let inp = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let r0 = base + 2 * y * w + 2 * x;
                let r1 = r0 + w;
                out.push((inp[r0] + inp[r0 + 1] + inp[r1] + inp[r1 + 1]) * 0.25);
            }
        }
    }
    Tensor::new([n, c, oh, ow], out).expect("pool output length")
}

pub(crate) fn avg_pool2x_backward(in_shape: Shape, grad_out: &[f64]) -> Vec<f64> {
    let [n, c, h, w] = in_shape;
    let (oh, ow) = (h / 2, w / 2);
    let mut gi = vec![0.0; n * c * h * w];
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let g = grad_out[plane * oh * ow + y * ow + x] * 0.25;
                let r0 = base + 2 * y * w + 2 * x;
                let r1 = r0 + w;
                gi[r0] += g;
                gi[r0 + 1] += g;
                gi[r1] += g;
                gi[r1 + 1] += g;
            }
        }
    }
    gi
}

/// Returns the pooled tensor and, per output element, the flat input index
/// that won (first maximum in row-major window order).
pub(crate) fn max_pool2x(input: &Tensor) -> (Tensor, Vec<usize>) {
    let [n, c, h, w] = input.shape();
    let (oh, ow) = (h / 2, w / 2);
    let inp = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let r0 = base + 2 * y * w + 2 * x;
                let cands = [r0, r0 + 1, r0 + w, r0 + w + 1];
                let mut best = cands[0];
                for &i in &cands[1..] {
                    if inp[i] > inp[best] {
                        best = i;
                    }
                }
                out.push(inp[best]);
                arg.push(best);
            }
        }
    }
    (Tensor::new([n, c, oh, ow], out).expect("pool output length"), arg)
}

pub(crate) const BN_EPS: f64 = 1e-5;

pub(crate) struct BatchNormCache {
    pub normalized: Vec<f64>,
    pub inv_std: Vec<f64>,
}

/// Per-channel normalization with batch statistics (biased variance).
pub(crate) fn batch_norm(input: &Tensor) -> Result<BatchNormCache> {
    let [n, c, h, w] = input.shape();
    let count = n * h * w;
    if count < 2 {
        return Err(TensorError::precondition(
            "batch_norm",
            format!("normalization population per channel is {count}, need >= 2"),
        ));
    }
    let inp = input.data();
    let plane = h * w;
    let mut normalized = vec![0.0; inp.len()];
    let mut inv_std = Vec::with_capacity(c);
    for ci in 0..c {
        let mut sum = 0.0;
        for ni in 0..n {
            let base = (ni * c + ci) * plane;
            sum += inp[base..base + plane].iter().sum::<f64>();
        }
        let mean = sum / count as f64;
        let mut var = 0.0;
        for ni in 0..n {
            let base = (ni * c + ci) * plane;
            var += inp[base..base + plane].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        }
        var /= count as f64;
        let istd = 1.0 / (var + BN_EPS).sqrt();
        for ni in 0..n {
            let base = (ni * c + ci) * plane;
            for i in base..base + plane {
                normalized[i] = (inp[i] - mean) * istd;
            }
        }
        inv_std.push(istd);
    }
    Ok(BatchNormCache { normalized, inv_std })
}

/// Gradient w.r.t. the pre-normalization input given the gradient w.r.t. the
/// normalized values.
pub(crate) fn batch_norm_backward(shape: Shape, cache: &BatchNormCache, grad_norm: &[f64]) -> Vec<f64> {
    let [n, c, h, w] = shape;
    let plane = h * w;
    let m = (n * plane) as f64;
    let mut gi = vec![0.0; grad_norm.len()];
    for ci in 0..c {
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for ni in 0..n {
            let base = (ni * c + ci) * plane;
            for i in base..base + plane {
                sum_g += grad_norm[i];
                sum_gx += grad_norm[i] * cache.normalized[i];
            }
        }
        let scale = cache.inv_std[ci] / m;
        for ni in 0..n {
            let base = (ni * c + ci) * plane;
            for i in base..base + plane {
                gi[i] = scale * (m * grad_norm[i] - sum_g - cache.normalized[i] * sum_gx);
            }
        }
    }
    gi
}
