//! Forward and backward kernels for the supported layer kinds.
//!
//! Dense weights are stored row-major as `[out][in]` followed by `out` biases.
//! Convolutions are stride 1 with zero "same" padding; weights are
//! `[out_ch][in_ch][k][k]` followed by `out_ch` biases. Max pooling uses
//! non-overlapping `size x size` windows.

use super::{LayerKind, LayerSpec};

pub(crate) fn param_count(layer: &LayerSpec) -> usize {
    let d = &layer.dims;
    match layer.kind {
        LayerKind::Dense => d[0] * d[1] + d[1],
        LayerKind::Conv => d[1] * d[0] * d[2] * d[2] + d[1],
        LayerKind::Pool | LayerKind::Activation => 0,
    }
}

pub(crate) fn input_len(layer: &LayerSpec) -> usize {
    let d = &layer.dims;
    match layer.kind {
        LayerKind::Dense => d[0],
        LayerKind::Conv => d[0] * d[3] * d[4],
        LayerKind::Pool => d[0] * d[1] * d[2],
        LayerKind::Activation => d[0],
    }
}

pub(crate) fn output_len(layer: &LayerSpec) -> usize {
    let d = &layer.dims;
    match layer.kind {
        LayerKind::Dense => d[1],
        LayerKind::Conv => d[1] * d[3] * d[4],
        LayerKind::Pool => d[0] * (d[1] / d[3]) * (d[2] / d[3]),
        LayerKind::Activation => d[0],
    }
}

/// Glorot fan-in and fan-out of a parametric layer.
pub(crate) fn fans(layer: &LayerSpec) -> (usize, usize) {
    let d = &layer.dims;
    match layer.kind {
        LayerKind::Dense => (d[0], d[1]),
        LayerKind::Conv => (d[0] * d[2] * d[2], d[1] * d[2] * d[2]),
        LayerKind::Pool | LayerKind::Activation => (0, 0),
    }
}

/// Number of weights (as opposed to biases) at the front of the block.
pub(crate) fn weight_count(layer: &LayerSpec) -> usize {
    let d = &layer.dims;
    match layer.kind {
        LayerKind::Dense => d[0] * d[1],
        LayerKind::Conv => d[1] * d[0] * d[2] * d[2],
        LayerKind::Pool | LayerKind::Activation => 0,
    }
}

/// Runs one layer. `argmax` records pooling winners for the backward pass.
pub(crate) fn forward(
    layer: &LayerSpec,
    params: &[f64],
    x: &[f64],
    y: &mut Vec<f64>,
    argmax: &mut Vec<usize>,
) {
    let d = &layer.dims;
    y.clear();
    match layer.kind {
        LayerKind::Dense => {
            let (n_in, n_out) = (d[0], d[1]);
            let (w, b) = params.split_at(n_in * n_out);
            y.extend((0..n_out).map(|o| {
                let row = &w[o * n_in..(o + 1) * n_in];
                b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            }));
        }
        LayerKind::Conv => {
            let (cin, cout, k, h, wd) = (d[0], d[1], d[2], d[3], d[4]);
            let pad = k / 2;
            let (w, b) = params.split_at(cout * cin * k * k);
            y.resize(cout * h * wd, 0.0);
            for o in 0..cout {
                let plane = &mut y[o * h * wd..(o + 1) * h * wd];
                plane.fill(b[o]);
                for c in 0..cin {
                    let xin = &x[c * h * wd..(c + 1) * h * wd];
                    let kern = &w[(o * cin + c) * k * k..(o * cin + c + 1) * k * k];
                    for ky in 0..k {
                        for kx in 0..k {
                            let wv = kern[ky * k + kx];
                            for r in 0..h {
                                let ir = r as isize + ky as isize - pad as isize;
                                if ir < 0 || ir >= h as isize {
                                    continue;
                                }
                                let ir = ir as usize;
                                let (c_lo, c_hi) = valid_cols(kx, pad, wd);
                                let out_row = &mut plane[r * wd..(r + 1) * wd];
                                let in_row = &xin[ir * wd..(ir + 1) * wd];
                                for col in c_lo..c_hi {
                                    out_row[col] += wv * in_row[col + kx - pad];
                                }
                            }
                        }
                    }
                }
            }
        }
        LayerKind::Pool => {
            let (ch, h, wd, s) = (d[0], d[1], d[2], d[3]);
            let (oh, ow) = (h / s, wd / s);
            argmax.clear();
            for c in 0..ch {
                for r in 0..oh {
                    for col in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut at = 0;
                        for dy in 0..s {
                            for dx in 0..s {
                                let idx = c * h * wd + (r * s + dy) * wd + col * s + dx;
                                if x[idx] > best {
                                    best = x[idx];
                                    at = idx;
                                }
                            }
                        }
                        y.push(best);
                        argmax.push(at);
                    }
                }
            }
        }
        LayerKind::Activation => y.extend(x.iter().map(|&v| v.max(0.0))),
    }
}

/// Output columns whose kernel tap `kx` lands inside the input row.
fn valid_cols(kx: usize, pad: usize, wd: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kx);
    let hi = (wd + pad).saturating_sub(kx).min(wd);
    (lo, hi)
}

/// Accumulates parameter gradients into `dparams` and, when `dx` is given,
/// writes the input gradient.
pub(crate) fn backward(
    layer: &LayerSpec,
    params: &[f64],
    x: &[f64],
    argmax: &[usize],
    dy: &[f64],
    dparams: &mut [f64],
    dx: Option<&mut Vec<f64>>,
) {
    let d = &layer.dims;
    match layer.kind {
        LayerKind::Dense => {
            let (n_in, n_out) = (d[0], d[1]);
            let (dw, db) = dparams.split_at_mut(n_in * n_out);
            for o in 0..n_out {
                let g = dy[o];
                db[o] += g;
                if g != 0.0 {
                    for (acc, &xi) in dw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                        *acc += g * xi;
                    }
                }
            }
            if let Some(dx) = dx {
                let w = &params[..n_in * n_out];
                dx.clear();
                dx.resize(n_in, 0.0);
                for o in 0..n_out {
                    let g = dy[o];
                    if g != 0.0 {
                        for (acc, &wv) in dx.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                            *acc += g * wv;
                        }
                    }
                }
            }
        }
        LayerKind::Conv => {
            let (cin, cout, k, h, wd) = (d[0], d[1], d[2], d[3], d[4]);
            let pad = k / 2;
            let w = &params[..cout * cin * k * k];
            let (dw, db) = dparams.split_at_mut(cout * cin * k * k);
            let mut dx = dx;
            if let Some(dx) = dx.as_deref_mut() {
                dx.clear();
                dx.resize(cin * h * wd, 0.0);
            }
            for o in 0..cout {
                let gplane = &dy[o * h * wd..(o + 1) * h * wd];
                db[o] += gplane.iter().sum::<f64>();
                for c in 0..cin {
                    let xin = &x[c * h * wd..(c + 1) * h * wd];
                    let base = (o * cin + c) * k * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            let (c_lo, c_hi) = valid_cols(kx, pad, wd);
                            let mut acc = 0.0;
                            for r in 0..h {
                                let ir = r as isize + ky as isize - pad as isize;
                                if ir < 0 || ir >= h as isize {
                                    continue;
                                }
                                let ir = ir as usize;
                                let g_row = &gplane[r * wd..(r + 1) * wd];
                                let in_row = &xin[ir * wd..(ir + 1) * wd];
                                for col in c_lo..c_hi {
                                    acc += g_row[col] * in_row[col + kx - pad];
                                }
                            }
                            dw[base + ky * k + kx] += acc;
                            if let Some(dx) = dx.as_deref_mut() {
                                let wv = w[base + ky * k + kx];
                                let dplane = &mut dx[c * h * wd..(c + 1) * h * wd];
                                for r in 0..h {
                                    let ir = r as isize + ky as isize - pad as isize;
                                    if ir < 0 || ir >= h as isize {
                                        continue;
                                    }
                                    let ir = ir as usize;
                                    for col in c_lo..c_hi {
                                        dplane[ir * wd + col + kx - pad] +=
                                            wv * gplane[r * wd + col];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        LayerKind::Pool => {
            if let Some(dx) = dx {
                dx.clear();
                dx.resize(input_len(layer), 0.0);
                for (&at, &g) in argmax.iter().zip(dy) {
                    dx[at] += g;
                }
            }
        }
        LayerKind::Activation => {
            if let Some(dx) = dx {
                dx.clear();
                dx.extend(
                    x.iter()
                        .zip(dy)
                        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }),
                );
            }
        }
    }
}
