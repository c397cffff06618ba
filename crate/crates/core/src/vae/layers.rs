//! Real-valued 1-D layer primitives with hand-derived backward passes.
//!
//! Data layout is channels-first and flat: a `[ch, len]` activation is a
//! slice of length `ch * len` with `x[c * len + t]`. Convolution weights are
//! `[out_ch, in_ch, k]`; transposed-convolution weights are `[in_ch, out_ch,
//! k]` (the transposed map is the exact adjoint of a strided convolution
//! with the same geometry).

/// Output length of a strided convolution with zero padding.
pub fn conv_out_len(in_len: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (in_len + 2 * pad - kernel) / stride + 1
}

/// Valid kernel span `[j0, j1)` for an output position whose input window
/// starts at `base` (may be negative under zero padding).
#[inline]
fn kernel_span(base: isize, kernel: usize, in_len: usize) -> (usize, usize) {
    let j0 = (-base).max(0) as usize;
    let j1 = kernel.min((in_len as isize - base).max(0) as usize);
    (j0, j1.max(j0))
}

/// y[o, t] = b[o] + sum_{c, j} w[o, c, j] x[c, t s + j - p]
#[allow(clippy::too_many_arguments)]
pub fn conv1d_forward(
    x: &[f64],
    w: &[f64],
    b: &[f64],
    in_ch: usize,
    in_len: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    y: &mut [f64],
) {
    let out_len = conv_out_len(in_len, kernel, stride, pad);
    debug_assert_eq!(x.len(), in_ch * in_len);
    debug_assert_eq!(w.len(), out_ch * in_ch * kernel);
    debug_assert_eq!(y.len(), out_ch * out_len);
    for o in 0..out_ch {
        let yrow = &mut y[o * out_len..(o + 1) * out_len];
        yrow.fill(b[o]);
        for c in 0..in_ch {
            let xrow = &x[c * in_len..(c + 1) * in_len];
            let wrow = &w[(o * in_ch + c) * kernel..(o * in_ch + c + 1) * kernel];
            for (t, out) in yrow.iter_mut().enumerate() {
                let base = (t * stride) as isize - pad as isize;
                let (j0, j1) = kernel_span(base, kernel, in_len);
                let start = (base + j0 as isize) as usize;
                let mut acc = 0.0;
                for (wv, xv) in wrow[j0..j1].iter().zip(&xrow[start..start + (j1 - j0)]) {
                    acc += wv * xv;
                }
                *out += acc;
            }
        }
    }
}

/// Accumulates gradients of a convolution. `gx` may be `None` for the first
/// layer (no need to backpropagate into the data).
#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward(
    x: &[f64],
    w: &[f64],
    gy: &[f64],
    in_ch: usize,
    in_len: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    gw: &mut [f64],
    gb: &mut [f64],
    mut gx: Option<&mut [f64]>,
) {
    let out_len = conv_out_len(in_len, kernel, stride, pad);
    if let Some(gx) = gx.as_deref_mut() {
        gx.fill(0.0);
    }
    for o in 0..out_ch {
        let gyrow = &gy[o * out_len..(o + 1) * out_len];
        gb[o] += gyrow.iter().sum::<f64>();
        for c in 0..in_ch {
            let xrow = &x[c * in_len..(c + 1) * in_len];
            let grow = &mut gw[(o * in_ch + c) * kernel..(o * in_ch + c + 1) * kernel];
            let wrow = &w[(o * in_ch + c) * kernel..(o * in_ch + c + 1) * kernel];
            let mut gxrow = gx
                .as_deref_mut()
                .map(|gx| &mut gx[c * in_len..(c + 1) * in_len]);
            for (t, &g) in gyrow.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let base = (t * stride) as isize - pad as isize;
                let (j0, j1) = kernel_span(base, kernel, in_len);
                let start = (base + j0 as isize) as usize;
                let span = j1 - j0;
                for (gv, xv) in grow[j0..j1].iter_mut().zip(&xrow[start..start + span]) {
                    *gv += g * xv;
                }
                if let Some(gxrow) = gxrow.as_deref_mut() {
                    for (gxv, wv) in gxrow[start..start + span].iter_mut().zip(&wrow[j0..j1]) {
                        *gxv += g * wv;
                    }
                }
            }
        }
    }
}

/// Transposed convolution (adjoint of the strided convolution):
/// y[o, t s + j - p] += w[i, o, j] x[i, t], plus bias.
#[allow(clippy::too_many_arguments)]
pub fn tconv1d_forward(
    x: &[f64],
    w: &[f64],
    b: &[f64],
    in_ch: usize,
    in_len: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    out_len: usize,
    y: &mut [f64],
) {
    debug_assert_eq!(x.len(), in_ch * in_len);
    debug_assert_eq!(w.len(), in_ch * out_ch * kernel);
    debug_assert_eq!(y.len(), out_ch * out_len);
    for o in 0..out_ch {
        y[o * out_len..(o + 1) * out_len].fill(b[o]);
    }
    for i in 0..in_ch {
        let xrow = &x[i * in_len..(i + 1) * in_len];
        for o in 0..out_ch {
            let wrow = &w[(i * out_ch + o) * kernel..(i * out_ch + o + 1) * kernel];
            let yrow = &mut y[o * out_len..(o + 1) * out_len];
            for (t, &xv) in xrow.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let base = (t * stride) as isize - pad as isize;
                let (j0, j1) = kernel_span(base, kernel, out_len);
                let start = (base + j0 as isize) as usize;
                for (yv, wv) in yrow[start..start + (j1 - j0)].iter_mut().zip(&wrow[j0..j1]) {
                    *yv += wv * xv;
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn tconv1d_backward(
    x: &[f64],
    w: &[f64],
    gy: &[f64],
    in_ch: usize,
    in_len: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    out_len: usize,
    gw: &mut [f64],
    gb: &mut [f64],
    gx: &mut [f64],
) {
    gx.fill(0.0);
    for o in 0..out_ch {
        gb[o] += gy[o * out_len..(o + 1) * out_len].iter().sum::<f64>();
    }
    for i in 0..in_ch {
        let xrow = &x[i * in_len..(i + 1) * in_len];
        let gxrow = &mut gx[i * in_len..(i + 1) * in_len];
        for o in 0..out_ch {
            let wrow = &w[(i * out_ch + o) * kernel..(i * out_ch + o + 1) * kernel];
            let grow = &mut gw[(i * out_ch + o) * kernel..(i * out_ch + o + 1) * kernel];
            let gyrow = &gy[o * out_len..(o + 1) * out_len];
            for (t, (&xv, gxv)) in xrow.iter().zip(gxrow.iter_mut()).enumerate() {
                let base = (t * stride) as isize - pad as isize;
                let (j0, j1) = kernel_span(base, kernel, out_len);
                let start = (base + j0 as isize) as usize;
                let span = j1 - j0;
                let gyw = &gyrow[start..start + span];
                let mut acc = 0.0;
                for ((gv, wv), &g) in grow[j0..j1].iter_mut().zip(&wrow[j0..j1]).zip(gyw) {
                    *gv += g * xv;
                    acc += g * wv;
                }
                *gxv += acc;
            }
        }
    }
}

/// y = W x + b with W stored row-major `[out, in]`.
pub fn dense_forward(x: &[f64], w: &[f64], b: &[f64], out_dim: usize, y: &mut [f64]) {
    let in_dim = x.len();
    debug_assert_eq!(w.len(), out_dim * in_dim);
    debug_assert_eq!(y.len(), out_dim);
    for (o, out) in y.iter_mut().enumerate() {
        let wrow = &w[o * in_dim..(o + 1) * in_dim];
        let mut acc = b[o];
        for (wv, xv) in wrow.iter().zip(x) {
            acc += wv * xv;
        }
        *out = acc;
    }
}

/// Accumulates dense-layer gradients; `gx` accumulates (callers reuse the
/// buffer across the two encoder heads).
pub fn dense_backward(
    x: &[f64],
    w: &[f64],
    gy: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    gx: Option<&mut [f64]>,
) {
    let in_dim = x.len();
    for (o, &g) in gy.iter().enumerate() {
        gb[o] += g;
        let grow = &mut gw[o * in_dim..(o + 1) * in_dim];
        for (gv, xv) in grow.iter_mut().zip(x) {
            *gv += g * xv;
        }
    }
    if let Some(gx) = gx {
        for (o, &g) in gy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let wrow = &w[o * in_dim..(o + 1) * in_dim];
            for (gxv, wv) in gx.iter_mut().zip(wrow) {
                *gxv += g * wv;
            }
        }
    }
}

pub fn relu(x: &[f64], y: &mut [f64]) {
    for (out, &v) in y.iter_mut().zip(x) {
        *out = v.max(0.0);
    }
}

/// gx = gy where the pre-activation was positive.
pub fn relu_backward(pre: &[f64], gy: &[f64], gx: &mut [f64]) {
    for ((g, &p), &gout) in gx.iter_mut().zip(pre).zip(gy) {
        *g = if p > 0.0 { gout } else { 0.0 };
    }
}

/// Numerically stable softplus and its derivative (the logistic sigmoid).
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
