//! Per-layer forward and backward kernels. `params` and `grad` slices start
//! at the layer's own parameters (weights then bias) and may run past them.

use super::{Layer, Shape};

pub(super) fn forward(layer: &Layer, input: Shape, params: &[f64], x: &[f64]) -> Vec<f64> {
    match *layer {
        Layer::Conv2d {
            out_channels,
            kernel,
            stride,
            padding,
            ..
        } => conv_forward(input, out_channels, kernel, stride, padding, params, x),
        Layer::ConvTranspose2d {
            out_channels,
            kernel,
            stride,
            padding,
            ..
        } => deconv_forward(input, out_channels, kernel, stride, padding, params, x),
        Layer::Linear { inputs, outputs } => {
            let (w, b) = params.split_at(inputs * outputs);
            (0..outputs)
                .map(|o| b[o] + dot(&w[o * inputs..(o + 1) * inputs], x))
                .collect()
        }
        Layer::LeakyRelu { slope } => x.iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect(),
        Layer::Tanh => x.iter().map(|v| v.tanh()).collect(),
        Layer::Sigmoid => x.iter().map(|&v| sigmoid(v)).collect(),
        Layer::Reshape { .. } => x.to_vec(),
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn backward(
    layer: &Layer,
    input: Shape,
    output: Shape,
    params: &[f64],
    x: &[f64],
    y: &[f64],
    g: &[f64],
    grad: &mut [f64],
) -> Vec<f64> {
    match *layer {
        Layer::Conv2d {
            kernel,
            stride,
            padding,
            ..
        } => conv_backward(input, output, kernel, stride, padding, params, x, g, grad),
        Layer::ConvTranspose2d {
            kernel,
            stride,
            padding,
            ..
        } => deconv_backward(input, output, kernel, stride, padding, params, x, g, grad),
        Layer::Linear { inputs, outputs } => {
            let (w, _) = params.split_at(inputs * outputs);
            let (gw, gb) = grad.split_at_mut(inputs * outputs);
            let mut gx = vec![0.0; inputs];
            for o in 0..outputs {
                let go = g[o];
                gb[o] += go;
                if go == 0.0 {
                    continue;
                }
                let row = &w[o * inputs..(o + 1) * inputs];
                let grow = &mut gw[o * inputs..(o + 1) * inputs];
                for i in 0..inputs {
                    grow[i] += go * x[i];
                    gx[i] += go * row[i];
                }
            }
            gx
        }
        Layer::LeakyRelu { slope } => x
            .iter()
            .zip(g)
            .map(|(&v, &gv)| if v > 0.0 { gv } else { slope * gv })
            .collect(),
        Layer::Tanh => y.iter().zip(g).map(|(&t, &gv)| gv * (1.0 - t * t)).collect(),
        Layer::Sigmoid => y.iter().zip(g).map(|(&s, &gv)| gv * s * (1.0 - s)).collect(),
        Layer::Reshape { .. } => g.to_vec(),
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Output columns `x` whose tap `kx` lands inside `[0, w)` for a strided,
/// padded correlation: `x·stride + kx − padding ∈ [0, w)`.
#[inline]
fn valid_range(kx: usize, stride: usize, padding: usize, w_in: usize, w_out: usize) -> (usize, usize) {
    // smallest x with x·s + kx ≥ p
    let lo = if kx >= padding { 0 } else { (padding - kx).div_ceil(stride) };
    // largest x with x·s + kx − p ≤ w_in − 1
    let hi = if w_in + padding > kx {
        ((w_in + padding - kx - 1) / stride + 1).min(w_out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Weights `[out, in, k, k]`, then `out` biases.
fn conv_forward(
    input: Shape,
    out_c: usize,
    k: usize,
    s: usize,
    p: usize,
    params: &[f64],
    x: &[f64],
) -> Vec<f64> {
    let [in_c, h, w] = input;
    let oh = (h + 2 * p - k) / s + 1;
    let ow = (w + 2 * p - k) / s + 1;
    let (weights, rest) = params.split_at(out_c * in_c * k * k);
    let mut out = vec![0.0; out_c * oh * ow];
    for o in 0..out_c {
        let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
        plane.fill(rest[o]);
        for c in 0..in_c {
            let src = &x[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                let (y0, y1) = valid_range(ky, s, p, h, oh);
                for kx in 0..k {
                    let wv = weights[((o * in_c + c) * k + ky) * k + kx];
                    let (x0, x1) = valid_range(kx, s, p, w, ow);
                    for oy in y0..y1 {
                        let iy = oy * s + ky - p;
                        let row = &src[iy * w..(iy + 1) * w];
                        let dst = &mut plane[oy * ow..(oy + 1) * ow];
                        for ox in x0..x1 {
                            dst[ox] += wv * row[ox * s + kx - p];
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: Shape,
    output: Shape,
    k: usize,
    s: usize,
    p: usize,
    params: &[f64],
    x: &[f64],
    g: &[f64],
    grad: &mut [f64],
) -> Vec<f64> {
    let [in_c, h, w] = input;
    let [out_c, oh, ow] = output;
    let nw = out_c * in_c * k * k;
    let weights = &params[..nw];
    let (gw, gb) = grad.split_at_mut(nw);
    let mut gx = vec![0.0; in_c * h * w];
    for o in 0..out_c {
        let gplane = &g[o * oh * ow..(o + 1) * oh * ow];
        gb[o] += gplane.iter().sum::<f64>();
        for c in 0..in_c {
            let src = &x[c * h * w..(c + 1) * h * w];
            let gsrc = &mut gx[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                let (y0, y1) = valid_range(ky, s, p, h, oh);
                for kx in 0..k {
                    let widx = ((o * in_c + c) * k + ky) * k + kx;
                    let wv = weights[widx];
                    let (x0, x1) = valid_range(kx, s, p, w, ow);
                    let mut acc = 0.0;
                    for oy in y0..y1 {
                        let iy = oy * s + ky - p;
                        let grow = &gplane[oy * ow..(oy + 1) * ow];
                        for ox in x0..x1 {
                            let ix = iy * w + ox * s + kx - p;
                            acc += grow[ox] * src[ix];
                            gsrc[ix] += grow[ox] * wv;
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    gx
}

/// Weights `[in, out, k, k]`, then `out` biases. Input pixel `(iy, ix)`
/// scatters into output `(iy·s + ky − p, ix·s + kx − p)`.
fn deconv_forward(
    input: Shape,
    out_c: usize,
    k: usize,
    s: usize,
    p: usize,
    params: &[f64],
    x: &[f64],
) -> Vec<f64> {
    let [in_c, h, w] = input;
    let oh = (h - 1) * s + k - 2 * p;
    let ow = (w - 1) * s + k - 2 * p;
    let (weights, rest) = params.split_at(in_c * out_c * k * k);
    let mut out = vec![0.0; out_c * oh * ow];
    for o in 0..out_c {
        out[o * oh * ow..(o + 1) * oh * ow].fill(rest[o]);
    }
    for c in 0..in_c {
        let src = &x[c * h * w..(c + 1) * h * w];
        for o in 0..out_c {
            let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
            for ky in 0..k {
                // input rows whose scatter lands inside the output
                let (y0, y1) = valid_range(ky, s, p, oh, h);
                for kx in 0..k {
                    let wv = weights[((c * out_c + o) * k + ky) * k + kx];
                    let (x0, x1) = valid_range(kx, s, p, ow, w);
                    for iy in y0..y1 {
                        let oy = iy * s + ky - p;
                        let row = &src[iy * w..(iy + 1) * w];
                        let dst = &mut plane[oy * ow..(oy + 1) * ow];
                        for ix in x0..x1 {
                            dst[ix * s + kx - p] += wv * row[ix];
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn deconv_backward(
    input: Shape,
    output: Shape,
    k: usize,
    s: usize,
    p: usize,
    params: &[f64],
    x: &[f64],
    g: &[f64],
    grad: &mut [f64],
) -> Vec<f64> {
    let [in_c, h, w] = input;
    let [out_c, oh, ow] = output;
    let nw = in_c * out_c * k * k;
    let weights = &params[..nw];
    let (gw, gb) = grad.split_at_mut(nw);
    for o in 0..out_c {
        gb[o] += g[o * oh * ow..(o + 1) * oh * ow].iter().sum::<f64>();
    }
    let mut gx = vec![0.0; in_c * h * w];
    for c in 0..in_c {
        let src = &x[c * h * w..(c + 1) * h * w];
        let gsrc = &mut gx[c * h * w..(c + 1) * h * w];
        for o in 0..out_c {
            let gplane = &g[o * oh * ow..(o + 1) * oh * ow];
            for ky in 0..k {
                let (y0, y1) = valid_range(ky, s, p, oh, h);
                for kx in 0..k {
                    let widx = ((c * out_c + o) * k + ky) * k + kx;
                    let wv = weights[widx];
                    let (x0, x1) = valid_range(kx, s, p, ow, w);
                    let mut acc = 0.0;
                    for iy in y0..y1 {
                        let oy = iy * s + ky - p;
                        let grow = &gplane[oy * ow..(oy + 1) * ow];
                        for ix in x0..x1 {
                            let gv = grow[ix * s + kx - p];
                            acc += gv * src[iy * w + ix];
                            gsrc[iy * w + ix] += gv * wv;
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    gx
}
