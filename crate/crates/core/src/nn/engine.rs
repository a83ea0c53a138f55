//! Per-sample forward and reverse passes over a compiled plan.
//!
//! Everything here runs on one sample at a time; batch parallelism lives in
//! the training loop, which reduces per-sample gradients in a fixed order so
//! results are bitwise identical to a sequential run.

use crate::nn::params::ParameterSet;
use crate::nn::spec::{Network, PlanNode, Shape};

/// A (channels, height, width) activation tensor, channel-planar.
#[derive(Debug, Clone)]
pub(crate) struct FeatureMap {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        FeatureMap {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), c * h * w);
        FeatureMap { c, h, w, data }
    }

    #[inline]
    pub fn channel(&self, ch: usize) -> &[f64] {
        &self.data[ch * self.h * self.w..(ch + 1) * self.h * self.w]
    }

    #[inline]
    pub fn channel_mut(&mut self, ch: usize) -> &mut [f64] {
        let hw = self.h * self.w;
        &mut self.data[ch * hw..(ch + 1) * hw]
    }
}

/// Cached activations for one sample, mirroring the plan.
pub(crate) enum TraceNode {
    Conv { input: FeatureMap },
    Affine { input: FeatureMap },
    Relu { output: FeatureMap },
    MaxPool { argmax: Vec<u32> },
    Gap,
    Linear { input: FeatureMap },
    Residual { input: FeatureMap, body: Vec<TraceNode> },
    Dense {
        /// Block input followed by each sub-layer's conv output.
        pieces: Vec<FeatureMap>,
        /// Per sub-layer: (affine output, relu output over the full concat).
        acts: Vec<(FeatureMap, FeatureMap)>,
    },
}

/// Valid output-coordinate range `[lo, hi)` for a kernel offset, so that the
/// corresponding input coordinate stays inside `[0, in_dim)`.
#[inline]
fn valid_range(
    k_off: usize,
    padding: usize,
    stride: usize,
    in_dim: usize,
    out_dim: usize,
) -> (usize, usize) {
    let lo = padding.saturating_sub(k_off).div_ceil(stride).min(out_dim);
    let hi = if in_dim + padding > k_off {
        (((in_dim + padding - k_off - 1) / stride) + 1).min(out_dim)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Fused 3-tap row convolution with pad 1, stride 1, equal widths:
/// `orow[i] += w0*irow[i-1] + w1*irow[i] + w2*irow[i+1]` (edges truncated).
#[inline]
fn row_conv3(orow: &mut [f64], irow: &[f64], w0: f64, w1: f64, w2: f64) {
    let n = orow.len();
    debug_assert_eq!(irow.len(), n);
    if n == 1 {
        orow[0] += w1 * irow[0];
        return;
    }
    orow[0] += w1 * irow[0] + w2 * irow[1];
    for ((o, a), (b, c)) in orow[1..n - 1]
        .iter_mut()
        .zip(&irow[..n - 2])
        .zip(irow[1..n - 1].iter().zip(&irow[2..n]))
    {
        *o += w0 * *a + w1 * *b + w2 * *c;
    }
    orow[n - 1] += w0 * irow[n - 2] + w1 * irow[n - 1];
}

/// Fused 3-tap weight-gradient row: accumulates the three kernel-x dots of
/// `drow` against `irow` (pad 1, stride 1, equal widths).
#[inline]
fn row_conv3_dw(drow: &[f64], irow: &[f64], acc: &mut [f64; 3]) {
    let n = drow.len();
    if n == 1 {
        acc[1] += drow[0] * irow[0];
        return;
    }
    let (mut a0, mut a1, mut a2) = (0.0, 0.0, 0.0);
    a1 += drow[0] * irow[0];
    a2 += drow[0] * irow[1];
    for ((d, x0), (x1, x2)) in drow[1..n - 1]
        .iter()
        .zip(&irow[..n - 2])
        .zip(irow[1..n - 1].iter().zip(&irow[2..n]))
    {
        a0 += *d * *x0;
        a1 += *d * *x1;
        a2 += *d * *x2;
    }
    a0 += drow[n - 1] * irow[n - 2];
    a1 += drow[n - 1] * irow[n - 1];
    acc[0] += a0;
    acc[1] += a1;
    acc[2] += a2;
}

/// True when the fused 3x3 same-size path applies.
#[inline]
fn is_same3(kernel: usize, stride: usize, padding: usize, in_shape: (usize, usize), out_shape: (usize, usize)) -> bool {
    kernel == 3 && stride == 1 && padding == 1 && in_shape == out_shape
}

/// True when the fused 3x3 stride-2 halving path applies (even input dims).
#[inline]
fn is_half3(kernel: usize, stride: usize, padding: usize, in_shape: (usize, usize), out_shape: (usize, usize)) -> bool {
    kernel == 3
        && stride == 2
        && padding == 1
        && in_shape.0 == 2 * out_shape.0
        && in_shape.1 == 2 * out_shape.1
}

/// Fused stride-2 3-tap row: `orow[i] += w0*ir[2i-1] + w1*ir[2i] + w2*ir[2i+1]`.
#[inline]
fn row_conv3_s2(orow: &mut [f64], irow: &[f64], w0: f64, w1: f64, w2: f64) {
    let n = orow.len();
    debug_assert_eq!(irow.len(), 2 * n);
    orow[0] += w1 * irow[0] + w2 * irow[1];
    for (ox, o) in orow.iter_mut().enumerate().skip(1) {
        let ix = 2 * ox;
        *o += w0 * irow[ix - 1] + w1 * irow[ix] + w2 * irow[ix + 1];
    }
}

/// Stride-2 input-gradient row: scatter of `drow` back through the taps.
#[inline]
fn row_conv3_s2_dx(din_row: &mut [f64], drow: &[f64], w0: f64, w1: f64, w2: f64) {
    let n = drow.len();
    debug_assert_eq!(din_row.len(), 2 * n);
    din_row[0] += w1 * drow[0];
    din_row[1] += w2 * drow[0];
    for (ox, d) in drow.iter().enumerate().skip(1) {
        let ix = 2 * ox;
        din_row[ix - 1] += w0 * *d;
        din_row[ix] += w1 * *d;
        din_row[ix + 1] += w2 * *d;
    }
}

/// Stride-2 weight-gradient row: the three strided dots in one pass.
#[inline]
fn row_conv3_s2_dw(drow: &[f64], irow: &[f64], acc: &mut [f64; 3]) {
    let n = drow.len();
    let (mut a0, mut a1, mut a2) = (0.0, 0.0, 0.0);
    a1 += drow[0] * irow[0];
    a2 += drow[0] * irow[1];
    for (ox, d) in drow.iter().enumerate().skip(1) {
        let ix = 2 * ox;
        a0 += *d * irow[ix - 1];
        a1 += *d * irow[ix];
        a2 += *d * irow[ix + 1];
    }
    let _ = n;
    acc[0] += a0;
    acc[1] += a1;
    acc[2] += a2;
}

/// out[oc] += w * in shifted by the kernel offset, over the valid range.
#[allow(clippy::too_many_arguments)]
fn conv_accumulate(
    out_ch: &mut [f64],
    in_ch: &[f64],
    wv: f64,
    ky: usize,
    kx: usize,
    stride: usize,
    padding: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
) {
    let (oy_lo, oy_hi) = valid_range(ky, padding, stride, in_h, out_h);
    let (ox_lo, ox_hi) = valid_range(kx, padding, stride, in_w, out_w);
    if ox_lo >= ox_hi {
        return;
    }
    for oy in oy_lo..oy_hi {
        let iy = oy * stride + ky - padding;
        let orow = &mut out_ch[oy * out_w..(oy + 1) * out_w];
        let irow = &in_ch[iy * in_w..(iy + 1) * in_w];
        if stride == 1 {
            let ix0 = ox_lo + kx - padding;
            let n = ox_hi - ox_lo;
            for (o, i) in orow[ox_lo..ox_hi].iter_mut().zip(&irow[ix0..ix0 + n]) {
                *o += wv * *i;
            }
        } else {
            for ox in ox_lo..ox_hi {
                orow[ox] += wv * irow[ox * stride + kx - padding];
            }
        }
    }
}

/// dW for one kernel offset: dot(dOut row segment, input row segment).
#[allow(clippy::too_many_arguments)]
fn conv_weight_grad(
    dout_ch: &[f64],
    in_ch: &[f64],
    ky: usize,
    kx: usize,
    stride: usize,
    padding: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
) -> f64 {
    let (oy_lo, oy_hi) = valid_range(ky, padding, stride, in_h, out_h);
    let (ox_lo, ox_hi) = valid_range(kx, padding, stride, in_w, out_w);
    if ox_lo >= ox_hi {
        return 0.0;
    }
    let mut acc = 0.0;
    for oy in oy_lo..oy_hi {
        let iy = oy * stride + ky - padding;
        let drow = &dout_ch[oy * out_w..(oy + 1) * out_w];
        let irow = &in_ch[iy * in_w..(iy + 1) * in_w];
        if stride == 1 {
            let ix0 = ox_lo + kx - padding;
            let n = ox_hi - ox_lo;
            for (d, i) in drow[ox_lo..ox_hi].iter().zip(&irow[ix0..ix0 + n]) {
                acc += *d * *i;
            }
        } else {
            for ox in ox_lo..ox_hi {
                acc += drow[ox] * irow[ox * stride + kx - padding];
            }
        }
    }
    acc
}

/// dIn += w * dOut scattered through the kernel offset.
#[allow(clippy::too_many_arguments)]
fn conv_input_grad(
    din_ch: &mut [f64],
    dout_ch: &[f64],
    wv: f64,
    ky: usize,
    kx: usize,
    stride: usize,
    padding: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
) {
    let (oy_lo, oy_hi) = valid_range(ky, padding, stride, in_h, out_h);
    let (ox_lo, ox_hi) = valid_range(kx, padding, stride, in_w, out_w);
    if ox_lo >= ox_hi {
        return;
    }
    for oy in oy_lo..oy_hi {
        let iy = oy * stride + ky - padding;
        let drow = &dout_ch[oy * out_w..(oy + 1) * out_w];
        let irow = &mut din_ch[iy * in_w..(iy + 1) * in_w];
        if stride == 1 {
            let ix0 = ox_lo + kx - padding;
            let n = ox_hi - ox_lo;
            for (i, d) in irow[ix0..ix0 + n].iter_mut().zip(&drow[ox_lo..ox_hi]) {
                *i += wv * *d;
            }
        } else {
            for ox in ox_lo..ox_hi {
                irow[ox * stride + kx - padding] += wv * drow[ox];
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    x: &FeatureMap,
    weight: &[f64],
    bias: &[f64],
    kernel: usize,
    stride: usize,
    padding: usize,
    out_shape: Shape,
) -> FeatureMap {
    let (out_c, out_h, out_w) = out_shape;
    let mut out = FeatureMap::zeros(out_c, out_h, out_w);
    let same3 = is_same3(kernel, stride, padding, (x.h, x.w), (out_h, out_w));
    let half3 = is_half3(kernel, stride, padding, (x.h, x.w), (out_h, out_w));
    let pointwise = kernel == 1 && stride == 1 && padding == 0;
    for oc in 0..out_c {
        let out_ch = out.channel_mut(oc);
        out_ch.fill(bias[oc]);
        for ic in 0..x.c {
            let in_ch = x.channel(ic);
            let wbase = ((oc * x.c) + ic) * kernel * kernel;
            if pointwise {
                let wv = weight[wbase];
                for (o, i) in out_ch.iter_mut().zip(in_ch) {
                    *o += wv * *i;
                }
            } else if same3 {
                let wk = &weight[wbase..wbase + 9];
                for oy in 0..out_h {
                    let orow = &mut out_ch[oy * out_w..(oy + 1) * out_w];
                    for ky in 0..3usize {
                        let iy = oy + ky;
                        if iy == 0 || iy > x.h {
                            continue; // input row oy+ky-1 out of range
                        }
                        let irow = &in_ch[(iy - 1) * x.w..iy * x.w];
                        let wrow = &wk[ky * 3..ky * 3 + 3];
                        row_conv3(orow, irow, wrow[0], wrow[1], wrow[2]);
                    }
                }
            } else if half3 {
                let wk = &weight[wbase..wbase + 9];
                for oy in 0..out_h {
                    let orow = &mut out_ch[oy * out_w..(oy + 1) * out_w];
                    for ky in 0..3usize {
                        let iy = 2 * oy + ky;
                        if iy == 0 || iy > x.h {
                            continue;
                        }
                        let irow = &in_ch[(iy - 1) * x.w..iy * x.w];
                        let wrow = &wk[ky * 3..ky * 3 + 3];
                        row_conv3_s2(orow, irow, wrow[0], wrow[1], wrow[2]);
                    }
                }
            } else {
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        let wv = weight[wbase + ky * kernel + kx];
                        conv_accumulate(
                            out_ch, in_ch, wv, ky, kx, stride, padding, x.h, x.w, out_h, out_w,
                        );
                    }
                }
            }
        }
    }
    out
}

/// Reverse pass of one convolution; returns dInput and writes dW/dB into
/// `grads` at the given entry offsets.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &FeatureMap,
    dout: &FeatureMap,
    weight: &[f64],
    kernel: usize,
    stride: usize,
    padding: usize,
    dw: &mut [f64],
    db: &mut [f64],
) -> FeatureMap {
    let mut din = FeatureMap::zeros(input.c, input.h, input.w);
    let same3 = is_same3(kernel, stride, padding, (input.h, input.w), (dout.h, dout.w));
    let half3 = is_half3(kernel, stride, padding, (input.h, input.w), (dout.h, dout.w));
    let pointwise = kernel == 1 && stride == 1 && padding == 0;
    for oc in 0..dout.c {
        let dout_ch = dout.channel(oc);
        db[oc] += dout_ch.iter().sum::<f64>();
        for ic in 0..input.c {
            let in_ch = input.channel(ic);
            let din_ch = din.channel_mut(ic);
            let wbase = ((oc * input.c) + ic) * kernel * kernel;
            if pointwise {
                let wv = weight[wbase];
                let mut acc = 0.0;
                for ((i, d), x) in din_ch.iter_mut().zip(dout_ch).zip(in_ch) {
                    acc += *d * *x;
                    *i += wv * *d;
                }
                dw[wbase] += acc;
            } else if same3 {
                let wk = &weight[wbase..wbase + 9];
                for oy in 0..dout.h {
                    let drow = &dout_ch[oy * dout.w..(oy + 1) * dout.w];
                    for ky in 0..3usize {
                        let iy = oy + ky;
                        if iy == 0 || iy > input.h {
                            continue;
                        }
                        let irow = &in_ch[(iy - 1) * input.w..iy * input.w];
                        // weight gradient: three kernel-x dots per row pair
                        let mut acc = [0.0f64; 3];
                        row_conv3_dw(drow, irow, &mut acc);
                        dw[wbase + ky * 3] += acc[0];
                        dw[wbase + ky * 3 + 1] += acc[1];
                        dw[wbase + ky * 3 + 2] += acc[2];
                        // input gradient: convolution with the flipped kernel
                        let din_row = &mut din_ch[(iy - 1) * input.w..iy * input.w];
                        row_conv3(din_row, drow, wk[ky * 3 + 2], wk[ky * 3 + 1], wk[ky * 3]);
                    }
                }
            } else if half3 {
                let wk = &weight[wbase..wbase + 9];
                for oy in 0..dout.h {
                    let drow = &dout_ch[oy * dout.w..(oy + 1) * dout.w];
                    for ky in 0..3usize {
                        let iy = 2 * oy + ky;
                        if iy == 0 || iy > input.h {
                            continue;
                        }
                        let irow = &in_ch[(iy - 1) * input.w..iy * input.w];
                        let mut acc = [0.0f64; 3];
                        row_conv3_s2_dw(drow, irow, &mut acc);
                        dw[wbase + ky * 3] += acc[0];
                        dw[wbase + ky * 3 + 1] += acc[1];
                        dw[wbase + ky * 3 + 2] += acc[2];
                        let din_row = &mut din_ch[(iy - 1) * input.w..iy * input.w];
                        row_conv3_s2_dx(din_row, drow, wk[ky * 3], wk[ky * 3 + 1], wk[ky * 3 + 2]);
                    }
                }
            } else {
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        let widx = wbase + ky * kernel + kx;
                        dw[widx] += conv_weight_grad(
                            dout_ch, in_ch, ky, kx, stride, padding, input.h, input.w, dout.h,
                            dout.w,
                        );
                        conv_input_grad(
                            din_ch, dout_ch, weight[widx], ky, kx, stride, padding, input.h,
                            input.w, dout.h, dout.w,
                        );
                    }
                }
            }
        }
    }
    din
}

fn maxpool_forward(x: &FeatureMap, window: usize, out_shape: Shape) -> (FeatureMap, Vec<u32>) {
    let (c, out_h, out_w) = out_shape;
    let mut out = FeatureMap::zeros(c, out_h, out_w);
    let mut argmax = vec![0u32; c * out_h * out_w];
    for ch in 0..c {
        let in_ch = x.channel(ch);
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0usize;
                for dy in 0..window {
                    let iy = oy * window + dy;
                    for dx in 0..window {
                        let ix = ox * window + dx;
                        let idx = iy * x.w + ix;
                        let v = in_ch[idx];
                        if v > best {
                            best = v;
                            best_idx = idx;
                        }
                    }
                }
                let o = (ch * out_h + oy) * out_w + ox;
                out.data[o] = best;
                argmax[o] = (ch * x.h * x.w + best_idx) as u32;
            }
        }
    }
    (out, argmax)
}

/// 1x1 projection used on residual skip paths: out[oc] = sum_ic w[oc,ic] x[ic].
fn project_forward(x: &FeatureMap, weight: &[f64], out_c: usize) -> FeatureMap {
    let mut out = FeatureMap::zeros(out_c, x.h, x.w);
    for oc in 0..out_c {
        let out_ch = out.channel_mut(oc);
        for ic in 0..x.c {
            let wv = weight[oc * x.c + ic];
            for (o, i) in out_ch.iter_mut().zip(x.channel(ic)) {
                *o += wv * *i;
            }
        }
    }
    out
}

pub(crate) struct SampleRun {
    pub logits: Vec<f64>,
    pub trace: Vec<TraceNode>,
}

impl Network {
    /// Forward one sample (flat channel-planar input scaled to [0, 1]).
    pub(crate) fn forward_sample(&self, params: &ParameterSet, input: Vec<f64>) -> SampleRun {
        let (c, h, w) = self.input_shape();
        debug_assert_eq!(input.len(), c * h * w);
        let mut x = FeatureMap::from_vec(c, h, w, input);
        let mut trace = Vec::with_capacity(self.plan.len());
        x = forward_nodes(&self.plan, x, params, &mut trace);
        debug_assert_eq!((x.h, x.w), (1, 1));
        SampleRun {
            logits: x.data,
            trace,
        }
    }

    /// Reverse pass for one sample. `dlogits` is the gradient of this
    /// sample's loss with respect to the logits; parameter gradients are
    /// accumulated into `grads` (flat, aligned with the parameter data).
    pub(crate) fn backward_sample(
        &self,
        params: &ParameterSet,
        trace: &[TraceNode],
        dlogits: &[f64],
        grads: &mut [f64],
    ) {
        let d = FeatureMap::from_vec(dlogits.len(), 1, 1, dlogits.to_vec());
        backward_nodes(&self.plan, trace, d, params, grads);
    }

}

fn forward_nodes(
    nodes: &[PlanNode],
    mut x: FeatureMap,
    params: &ParameterSet,
    trace: &mut Vec<TraceNode>,
) -> FeatureMap {
    for node in nodes {
        x = match node {
            PlanNode::Conv {
                w,
                b,
                kernel,
                stride,
                padding,
                out_shape,
            } => {
                let out = conv_forward(
                    &x,
                    params.slice(*w),
                    params.slice(*b),
                    *kernel,
                    *stride,
                    *padding,
                    *out_shape,
                );
                trace.push(TraceNode::Conv { input: x });
                out
            }
            PlanNode::Affine { scale, bias } => {
                let sc = params.slice(*scale);
                let bs = params.slice(*bias);
                let mut out = FeatureMap::zeros(x.c, x.h, x.w);
                for ch in 0..x.c {
                    let (s, b) = (sc[ch], bs[ch]);
                    for (o, i) in out.channel_mut(ch).iter_mut().zip(x.channel(ch)) {
                        *o = s * *i + b;
                    }
                }
                trace.push(TraceNode::Affine { input: x });
                out
            }
            PlanNode::Relu => {
                let mut out = x;
                for v in &mut out.data {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                trace.push(TraceNode::Relu { output: out.clone() });
                out
            }
            PlanNode::MaxPool {
                window, out_shape, ..
            } => {
                let (out, argmax) = maxpool_forward(&x, *window, *out_shape);
                trace.push(TraceNode::MaxPool { argmax });
                out
            }
            PlanNode::GlobalAvgPool { .. } => {
                let hw = (x.h * x.w) as f64;
                let mut out = FeatureMap::zeros(x.c, 1, 1);
                for ch in 0..x.c {
                    out.data[ch] = x.channel(ch).iter().sum::<f64>() / hw;
                }
                trace.push(TraceNode::Gap);
                out
            }
            PlanNode::Linear { w, b, out, .. } => {
                let weight = params.slice(*w);
                let bias = params.slice(*b);
                let n_in = x.data.len();
                let mut logits = FeatureMap::zeros(*out, 1, 1);
                for o in 0..*out {
                    let row = &weight[o * n_in..(o + 1) * n_in];
                    let mut acc = bias[o];
                    for (wv, xv) in row.iter().zip(&x.data) {
                        acc += wv * xv;
                    }
                    logits.data[o] = acc;
                }
                trace.push(TraceNode::Linear { input: x });
                logits
            }
            PlanNode::Residual {
                proj,
                body,
                out_shape,
                ..
            } => {
                let mut body_trace = Vec::with_capacity(body.len());
                let body_out = forward_nodes(body, x.clone(), params, &mut body_trace);
                let mut out = body_out;
                match proj {
                    Some(pw) => {
                        let projected = project_forward(&x, params.slice(*pw), out_shape.0);
                        for (o, p) in out.data.iter_mut().zip(&projected.data) {
                            *o += *p;
                        }
                    }
                    None => {
                        for (o, i) in out.data.iter_mut().zip(&x.data) {
                            *o += *i;
                        }
                    }
                }
                trace.push(TraceNode::Residual {
                    input: x,
                    body: body_trace,
                });
                out
            }
            PlanNode::DenseBlock {
                subs,
                growth,
                ..
            } => {
                let mut pieces: Vec<FeatureMap> = vec![x];
                let mut acts = Vec::with_capacity(subs.len());
                for sub in subs {
                    let concat = concat_pieces(&pieces);
                    // affine
                    let sc = params.slice(sub.scale);
                    let bs = params.slice(sub.bias);
                    let mut affine_out = FeatureMap::zeros(concat.c, concat.h, concat.w);
                    for ch in 0..concat.c {
                        let (s, b) = (sc[ch], bs[ch]);
                        for (o, i) in affine_out
                            .channel_mut(ch)
                            .iter_mut()
                            .zip(concat.channel(ch))
                        {
                            *o = s * *i + b;
                        }
                    }
                    // relu
                    let mut relu_out = affine_out.clone();
                    for v in &mut relu_out.data {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                    // conv, same spatial size
                    let pad = sub.kernel / 2;
                    let y = conv_forward(
                        &relu_out,
                        params.slice(sub.conv_w),
                        params.slice(sub.conv_b),
                        sub.kernel,
                        1,
                        pad,
                        (*growth, concat.h, concat.w),
                    );
                    acts.push((affine_out, relu_out));
                    pieces.push(y);
                }
                let out = concat_pieces(&pieces);
                trace.push(TraceNode::Dense { pieces, acts });
                out
            }
        };
    }
    x
}

fn concat_pieces(pieces: &[FeatureMap]) -> FeatureMap {
    let (h, w) = (pieces[0].h, pieces[0].w);
    let c: usize = pieces.iter().map(|p| p.c).sum();
    let mut data = Vec::with_capacity(c * h * w);
    for p in pieces {
        debug_assert_eq!((p.h, p.w), (h, w));
        data.extend_from_slice(&p.data);
    }
    FeatureMap::from_vec(c, h, w, data)
}

fn backward_nodes(
    nodes: &[PlanNode],
    trace: &[TraceNode],
    mut d: FeatureMap,
    params: &ParameterSet,
    grads: &mut [f64],
) -> FeatureMap {
    debug_assert_eq!(nodes.len(), trace.len());
    for (node, tr) in nodes.iter().zip(trace.iter()).rev() {
        d = match (node, tr) {
            (
                PlanNode::Conv {
                    w,
                    b,
                    kernel,
                    stride,
                    padding,
                    ..
                },
                TraceNode::Conv { input },
            ) => {
                let (dw_range, db_range) = (entry_range(params, *w), entry_range(params, *b));
                // split disjoint gradient slices
                let (dw, db) = two_slices(grads, dw_range, db_range);
                conv_backward(
                    input,
                    &d,
                    params.slice(*w),
                    *kernel,
                    *stride,
                    *padding,
                    dw,
                    db,
                )
            }
            (PlanNode::Affine { scale, bias }, TraceNode::Affine { input }) => {
                let sc = params.slice(*scale);
                let (ds_range, db_range) =
                    (entry_range(params, *scale), entry_range(params, *bias));
                let (dscale, dbias) = two_slices(grads, ds_range, db_range);
                let mut din = FeatureMap::zeros(input.c, input.h, input.w);
                for ch in 0..input.c {
                    let dch = d.channel(ch);
                    let xch = input.channel(ch);
                    let mut s_acc = 0.0;
                    let mut b_acc = 0.0;
                    for (dv, xv) in dch.iter().zip(xch) {
                        s_acc += dv * xv;
                        b_acc += dv;
                    }
                    dscale[ch] += s_acc;
                    dbias[ch] += b_acc;
                    let s = sc[ch];
                    for (o, dv) in din.channel_mut(ch).iter_mut().zip(dch) {
                        *o = s * *dv;
                    }
                }
                din
            }
            (PlanNode::Relu, TraceNode::Relu { output }) => {
                let mut din = d;
                for (g, o) in din.data.iter_mut().zip(&output.data) {
                    if *o <= 0.0 {
                        *g = 0.0;
                    }
                }
                din
            }
            (PlanNode::MaxPool { in_shape, .. }, TraceNode::MaxPool { argmax }) => {
                let mut din = FeatureMap::zeros(in_shape.0, in_shape.1, in_shape.2);
                for (&src, &g) in argmax.iter().zip(&d.data) {
                    din.data[src as usize] += g;
                }
                din
            }
            (PlanNode::GlobalAvgPool { in_shape }, TraceNode::Gap) => {
                let (c, h, w) = *in_shape;
                let inv = 1.0 / (h * w) as f64;
                let mut din = FeatureMap::zeros(c, h, w);
                for ch in 0..c {
                    let g = d.data[ch] * inv;
                    din.channel_mut(ch).fill(g);
                }
                din
            }
            (PlanNode::Linear { w, b, in_shape, out }, TraceNode::Linear { input }) => {
                let weight = params.slice(*w);
                let n_in = input.data.len();
                let (dw_range, db_range) = (entry_range(params, *w), entry_range(params, *b));
                let (dw, db) = two_slices(grads, dw_range, db_range);
                let mut din = FeatureMap::zeros(in_shape.0, in_shape.1, in_shape.2);
                for o in 0..*out {
                    let g = d.data[o];
                    db[o] += g;
                    let wrow = &weight[o * n_in..(o + 1) * n_in];
                    let dwrow = &mut dw[o * n_in..(o + 1) * n_in];
                    for i in 0..n_in {
                        dwrow[i] += g * input.data[i];
                        din.data[i] += g * wrow[i];
                    }
                }
                din
            }
            (
                PlanNode::Residual {
                    proj,
                    body,
                    in_shape,
                    ..
                },
                TraceNode::Residual { input, body: body_trace },
            ) => {
                let d_body = backward_nodes(body, body_trace, d.clone(), params, grads);
                let mut din = d_body;
                match proj {
                    Some(pw) => {
                        let weight = params.slice(*pw);
                        let range = entry_range(params, *pw);
                        let dw = &mut grads[range.0..range.1];
                        let in_c = in_shape.0;
                        // accumulate projection grads and the skip-path input grad
                        for oc in 0..d.c {
                            let dch = d.channel(oc);
                            for ic in 0..in_c {
                                let xch = input.channel(ic);
                                let mut acc = 0.0;
                                for (dv, xv) in dch.iter().zip(xch) {
                                    acc += dv * xv;
                                }
                                dw[oc * in_c + ic] += acc;
                                let wv = weight[oc * in_c + ic];
                                for (o, dv) in
                                    din.channel_mut(ic).iter_mut().zip(dch)
                                {
                                    *o += wv * *dv;
                                }
                            }
                        }
                        debug_assert_eq!(din.c, in_shape.0);
                        din
                    }
                    None => {
                        for (o, dv) in din.data.iter_mut().zip(&d.data) {
                            *o += *dv;
                        }
                        din
                    }
                }
            }
            (
                PlanNode::DenseBlock {
                    subs, in_shape, growth, ..
                },
                TraceNode::Dense { pieces, acts },
            ) => {
                let (h, w) = (in_shape.1, in_shape.2);
                let hw = h * w;
                // slice the output gradient into per-piece gradients
                let mut d_pieces: Vec<FeatureMap> = Vec::with_capacity(pieces.len());
                let mut off = 0;
                for p in pieces {
                    let len = p.c * hw;
                    d_pieces.push(FeatureMap::from_vec(
                        p.c,
                        h,
                        w,
                        d.data[off..off + len].to_vec(),
                    ));
                    off += len;
                }
                for (l, sub) in subs.iter().enumerate().rev() {
                    let dy = d_pieces[l + 1].clone();
                    let (affine_out, relu_out) = &acts[l];
                    // conv backward
                    let pad = sub.kernel / 2;
                    let (dw_range, db_range) =
                        (entry_range(params, sub.conv_w), entry_range(params, sub.conv_b));
                    let (dw, db) = two_slices(grads, dw_range, db_range);
                    let mut d_relu = conv_backward(
                        relu_out,
                        &dy,
                        params.slice(sub.conv_w),
                        sub.kernel,
                        1,
                        pad,
                        dw,
                        db,
                    );
                    debug_assert_eq!(d_relu.c, sub.in_channels);
                    debug_assert_eq!(*growth, dy.c);
                    // relu backward (mask on affine output)
                    for (g, a) in d_relu.data.iter_mut().zip(&affine_out.data) {
                        if *a <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    // affine backward over the concatenated input
                    let concat_input = concat_pieces(&pieces[..=l]);
                    let sc = params.slice(sub.scale);
                    let (ds_range, db2_range) =
                        (entry_range(params, sub.scale), entry_range(params, sub.bias));
                    let (dscale, dbias) = two_slices(grads, ds_range, db2_range);
                    for ch in 0..sub.in_channels {
                        let dch = d_relu.channel(ch);
                        let xch = concat_input.channel(ch);
                        let mut s_acc = 0.0;
                        let mut b_acc = 0.0;
                        for (dv, xv) in dch.iter().zip(xch) {
                            s_acc += dv * xv;
                            b_acc += dv;
                        }
                        dscale[ch] += s_acc;
                        dbias[ch] += b_acc;
                    }
                    // route the concat gradient back into the pieces
                    let mut ch0 = 0;
                    for (piece_idx, p) in pieces[..=l].iter().enumerate() {
                        for ch in 0..p.c {
                            let s = sc[ch0 + ch];
                            let src = d_relu.channel(ch0 + ch);
                            for (o, dv) in d_pieces[piece_idx]
                                .channel_mut(ch)
                                .iter_mut()
                                .zip(src)
                            {
                                *o += s * *dv;
                            }
                        }
                        ch0 += p.c;
                    }
                }
                d_pieces.swap_remove(0)
            }
            _ => unreachable!("plan and trace walked in lockstep"),
        };
    }
    d
}

fn entry_range(params: &ParameterSet, idx: usize) -> (usize, usize) {
    let e = &params.entries()[idx];
    (e.offset, e.offset + e.len)
}

/// Two disjoint mutable slices out of the flat gradient buffer.
fn two_slices(
    grads: &mut [f64],
    a: (usize, usize),
    b: (usize, usize),
) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a.1 <= b.0 || b.1 <= a.0);
    if a.1 <= b.0 {
        let (left, right) = grads.split_at_mut(b.0);
        (&mut left[a.0..a.1], &mut right[..b.1 - b.0])
    } else {
        let (left, right) = grads.split_at_mut(a.0);
        let bl = &mut left[b.0..b.1];
        (&mut right[..a.1 - a.0], bl)
    }
}
