use crate::error::{Error, Result};
use crate::imgproc::{resize_bilinear, Plane};
use crate::preprocess::{MotionInput, INPUT_SIZE};

use super::model::{
    Gradients, SoftNetModel, CONCAT_CHANNELS, FILTERS, FLAT_LEN, HIDDEN, KERNEL, OFFSETS, POOL1_SIDE, POOL2_SIDE,
};

const N: usize = INPUT_SIZE;
const PAD: usize = KERNEL / 2;
const PADDED: usize = N + 2 * PAD;
const PLANE: usize = N * N;
const CONCAT_LEN: usize = POOL1_SIDE * POOL1_SIDE * CONCAT_CHANNELS;
/// First concat channel of each stream.
const CHANNEL_BASE: [usize; 3] = [0, FILTERS[0], FILTERS[0] + FILTERS[1]];

/// Intermediate values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    /// Zero-padded input planes, `PADDED x PADDED` each.
    padded: [Vec<f64>; 3],
    /// Post-ReLU convolution maps, `filters x 42 x 42` per stream.
    pub conv: [Vec<f64>; 3],
    /// Concatenated pooled maps, 14 x 14 x 16 in `(row * 14 + col) * 16 + channel` order.
    pub concat: Vec<f64>,
    /// Position inside the stream's conv plane that won each pool window.
    pool1_argmax: Vec<usize>,
    /// Concat index that won each 2x2 window.
    pool2_argmax: Vec<usize>,
    pub flat: Vec<f64>,
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub score: f64,
}

fn check_input(input: &MotionInput) -> Result<()> {
    for (name, c) in [("u", &input.u), ("v", &input.v), ("strain", &input.strain)] {
        if c.len() != PLANE {
            return Err(Error::ShapeMismatch(format!("{name} channel has {} values, expected {PLANE}", c.len())));
        }
    }
    Ok(())
}

fn pad(channel: &[f32]) -> Vec<f64> {
    let mut out = vec![0.0; PADDED * PADDED];
    for y in 0..N {
        let dst = &mut out[(y + PAD) * PADDED + PAD..(y + PAD) * PADDED + PAD + N];
        for (d, &s) in dst.iter_mut().zip(&channel[y * N..(y + 1) * N]) {
            *d = s as f64;
        }
    }
    out
}

/// Same-padded 5x5 convolution of one padded plane, then ReLU.
fn conv_relu(padded: &[f64], kernel: &[f64], bias: f64, out: &mut [f64]) {
    for (y, dst) in out.chunks_exact_mut(N).enumerate() {
        let mut acc = [bias; N];
        for ky in 0..KERNEL {
            let row = &padded[(y + ky) * PADDED..(y + ky + 1) * PADDED];
            for kx in 0..KERNEL {
                let w = kernel[ky * KERNEL + kx];
                let src: &[f64; N] = row[kx..kx + N].try_into().expect("row segment");
                for x in 0..N {
                    acc[x] += w * src[x];
                }
            }
        }
        for (d, a) in dst.iter_mut().zip(acc) {
            *d = a.max(0.0);
        }
    }
}

/// Score from a concatenated 14x14x16 map; also returns the pool-2 winners,
/// flattened vector and dense-1 values.
fn head(model: &SoftNetModel, concat: &[f64]) -> (f64, Vec<usize>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut argmax = vec![0; FLAT_LEN];
    let mut flat = vec![0.0; FLAT_LEN];
    for r in 0..POOL2_SIDE {
        for c in 0..POOL2_SIDE {
            for ch in 0..CONCAT_CHANNELS {
                let mut best_i = ((2 * r) * POOL1_SIDE + 2 * c) * CONCAT_CHANNELS + ch;
                let mut best = concat[best_i];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = ((2 * r + dy) * POOL1_SIDE + 2 * c + dx) * CONCAT_CHANNELS + ch;
                    if concat[i] > best {
                        best = concat[i];
                        best_i = i;
                    }
                }
                let o = (r * POOL2_SIDE + c) * CONCAT_CHANNELS + ch;
                flat[o] = best;
                argmax[o] = best_i;
            }
        }
    }
    let w1 = model.dense1_weight();
    let b1 = model.dense1_bias();
    let mut pre = vec![0.0; HIDDEN];
    let mut hidden = vec![0.0; HIDDEN];
    for j in 0..HIDDEN {
        let row = &w1[j * FLAT_LEN..(j + 1) * FLAT_LEN];
        let z = b1[j] + dot(row, &flat);
        pre[j] = z;
        hidden[j] = z.max(0.0);
    }
    let score = model.dense2_bias() + dot(model.dense2_weight(), &hidden);
    (score, argmax, flat, pre, hidden)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Eight running sums keep the loop vectorizable with a fixed order.
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// Output score and retained activations for one input.
pub fn forward(model: &SoftNetModel, input: &MotionInput) -> Result<(f64, Activations)> {
    check_input(input)?;
    let padded = [pad(&input.u), pad(&input.v), pad(&input.strain)];
    let mut conv: [Vec<f64>; 3] = std::array::from_fn(|s| vec![0.0; FILTERS[s] * PLANE]);
    let mut concat = vec![0.0; CONCAT_LEN];
    let mut pool1_argmax = vec![0; CONCAT_LEN];
    for s in 0..3 {
        let kernel = model.kernel(s);
        let bias = model.bias(s);
        for f in 0..FILTERS[s] {
            let out = &mut conv[s][f * PLANE..(f + 1) * PLANE];
            conv_relu(&padded[s], &kernel[f * 25..(f + 1) * 25], bias[f], out);
            let ch = CHANNEL_BASE[s] + f;
            for r in 0..POOL1_SIDE {
                for c in 0..POOL1_SIDE {
                    let mut best_i = (3 * r) * N + 3 * c;
                    let mut best = out[best_i];
                    for dy in 0..3 {
                        for dx in 0..3 {
                            let i = (3 * r + dy) * N + 3 * c + dx;
                            if out[i] > best {
                                best = out[i];
                                best_i = i;
                            }
                        }
                    }
                    let o = (r * POOL1_SIDE + c) * CONCAT_CHANNELS + ch;
                    concat[o] = best;
                    pool1_argmax[o] = best_i;
                }
            }
        }
    }
    let (score, pool2_argmax, flat, hidden_pre, hidden) = head(model, &concat);
    Ok((score, Activations { padded, conv, concat, pool1_argmax, pool2_argmax, flat, hidden_pre, hidden, score }))
}

/// Score only.
pub fn predict(model: &SoftNetModel, input: &MotionInput) -> Result<f64> {
    forward(model, input).map(|(s, _)| s)
}

/// The part of the network after the concatenation, applied to an arbitrary
/// 14x14x16 map (`(row * 14 + col) * 16 + channel` order).
pub fn forward_from_concat(model: &SoftNetModel, concat: &[f64]) -> Result<f64> {
    if concat.len() != CONCAT_LEN {
        return Err(Error::ShapeMismatch(format!("concat map of {} values, expected {CONCAT_LEN}", concat.len())));
    }
    Ok(head(model, concat).0)
}

/// Gradient of the score with respect to dense-1 pre-activations and the
/// flattened vector, given `d_score = dL/dscore`.
fn head_backward(model: &SoftNetModel, act: &Activations, d_score: f64) -> (Vec<f64>, Vec<f64>) {
    let w2 = model.dense2_weight();
    let d_pre: Vec<f64> = (0..HIDDEN).map(|j| if act.hidden_pre[j] > 0.0 { d_score * w2[j] } else { 0.0 }).collect();
    let w1 = model.dense1_weight();
    let mut d_flat = vec![0.0; FLAT_LEN];
    for (j, &d) in d_pre.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let row = &w1[j * FLAT_LEN..(j + 1) * FLAT_LEN];
        for (df, &w) in d_flat.iter_mut().zip(row) {
            *df += w * d;
        }
    }
    (d_pre, d_flat)
}

fn flat_to_concat(act: &Activations, d_flat: &[f64]) -> Vec<f64> {
    let mut d_concat = vec![0.0; CONCAT_LEN];
    for (o, &g) in d_flat.iter().enumerate() {
        d_concat[act.pool2_argmax[o]] += g;
    }
    d_concat
}

/// Accumulates convolution kernel and bias gradients into `grads`.
fn conv_backward(act: &Activations, d_concat: &[f64], grads: &mut [f64]) {
    for s in 0..3 {
        for f in 0..FILTERS[s] {
            let ch = CHANNEL_BASE[s] + f;
            let kernel_at = OFFSETS.kernel[s] + f * 25;
            let bias_at = OFFSETS.bias[s] + f;
            let plane = &act.conv[s][f * PLANE..(f + 1) * PLANE];
            for cell in 0..POOL1_SIDE * POOL1_SIDE {
                let o = cell * CONCAT_CHANNELS + ch;
                let g = d_concat[o];
                let pos = act.pool1_argmax[o];
                // Gradient is blocked where the ReLU output is zero.
                if g == 0.0 || plane[pos] <= 0.0 {
                    continue;
                }
                let (y, x) = (pos / N, pos % N);
                grads[bias_at] += g;
                for ky in 0..KERNEL {
                    let src = &act.padded[s][(y + ky) * PADDED + x..(y + ky) * PADDED + x + KERNEL];
                    for (kx, &v) in src.iter().enumerate() {
                        grads[kernel_at + ky * KERNEL + kx] += g * v;
                    }
                }
            }
        }
    }
}

/// Gradients of `0.5 * (score - target)^2` with respect to every parameter.
pub fn backward(model: &SoftNetModel, act: &Activations, target: f64) -> Gradients {
    let e = act.score - target;
    let mut grads = Gradients::zeros();
    let g = &mut grads.values;
    g[OFFSETS.dense2_b] = e;
    for j in 0..HIDDEN {
        g[OFFSETS.dense2_w + j] = e * act.hidden[j];
    }
    let (d_pre, d_flat) = head_backward(model, act, e);
    for (j, &d) in d_pre.iter().enumerate() {
        g[OFFSETS.dense1_b + j] = d;
        if d == 0.0 {
            continue;
        }
        let row = &mut g[OFFSETS.dense1_w + j * FLAT_LEN..OFFSETS.dense1_w + (j + 1) * FLAT_LEN];
        for (r, &x) in row.iter_mut().zip(&act.flat) {
            *r = d * x;
        }
    }
    let d_concat = flat_to_concat(act, &d_flat);
    conv_backward(act, &d_concat, g);
    grads
}

/// `w <- w - lr * g` for every parameter. Rejects non-finite gradients
/// before touching the model.
pub fn sgd_step(model: &mut SoftNetModel, grads: &Gradients, learning_rate: f64) -> Result<()> {
    if grads.values.len() != model.parameter_count() {
        return Err(Error::ShapeMismatch("gradient length differs from the model".into()));
    }
    if let Some(i) = grads.values.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { layer: super::model::layer_of(i), index: i });
    }
    for (w, g) in model.params_mut().iter_mut().zip(&grads.values) {
        *w -= learning_rate * g;
    }
    Ok(())
}

/// Forward pass, backward pass and SGD update in one sweep over the dense
/// weights. Produces exactly the model that [`backward`] followed by
/// [`sgd_step`] would. Returns the loss before the update.
pub fn train_step(model: &mut SoftNetModel, input: &MotionInput, target: f64, learning_rate: f64) -> Result<f64> {
    let (score, act) = forward(model, input)?;
    let e = score - target;
    let loss = 0.5 * e * e;
    let w2: Vec<f64> = model.dense2_weight().to_vec();
    let d_pre: Vec<f64> = (0..HIDDEN).map(|j| if act.hidden_pre[j] > 0.0 { e * w2[j] } else { 0.0 }).collect();
    let flat_max = act.flat.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let pre_max = d_pre.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(e.is_finite() && (pre_max * flat_max).is_finite() && act.hidden.iter().all(|h| h.is_finite())) {
        return Err(Error::NonFiniteGradient { layer: "dense1.weight", index: OFFSETS.dense1_w });
    }

    let mut conv_grads = vec![0.0; OFFSETS.dense1_w];
    let mut d_flat = vec![0.0; FLAT_LEN];
    {
        let params = model.params_mut();
        for (j, &d) in d_pre.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &mut params[OFFSETS.dense1_w + j * FLAT_LEN..OFFSETS.dense1_w + (j + 1) * FLAT_LEN];
            for ((w, df), &x) in row.iter_mut().zip(d_flat.iter_mut()).zip(&act.flat) {
                *df += *w * d;
                *w -= learning_rate * (d * x);
            }
        }
        for (j, &d) in d_pre.iter().enumerate() {
            params[OFFSETS.dense1_b + j] -= learning_rate * d;
        }
        for j in 0..HIDDEN {
            params[OFFSETS.dense2_w + j] -= learning_rate * (e * act.hidden[j]);
        }
        params[OFFSETS.dense2_b] -= learning_rate * e;
    }
    let d_concat = flat_to_concat(&act, &d_flat);
    conv_backward(&act, &d_concat, &mut conv_grads);
    if let Some(i) = conv_grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { layer: super::model::layer_of(i), index: i });
    }
    for (w, g) in model.params_mut()[..OFFSETS.dense1_w].iter_mut().zip(&conv_grads) {
        *w -= learning_rate * g;
    }
    Ok(loss)
}

/// Class activation map over the concatenated layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCam {
    /// 42x42, values in [0, 1].
    pub heatmap: Vec<f64>,
    /// The 14x14 map before upsampling and normalization.
    pub coarse: Vec<f64>,
    /// Spatial mean of the score gradient for each concat channel.
    pub channel_weights: Vec<f64>,
}

/// Gradient-weighted activation map of the concat layer, upsampled by 3.
pub fn grad_cam(model: &SoftNetModel, input: &MotionInput) -> Result<GradCam> {
    let (_, act) = forward(model, input)?;
    let (_, d_flat) = head_backward(model, &act, 1.0);
    let d_concat = flat_to_concat(&act, &d_flat);
    let cells = (POOL1_SIDE * POOL1_SIDE) as f64;
    let mut channel_weights = vec![0.0; CONCAT_CHANNELS];
    for (i, &g) in d_concat.iter().enumerate() {
        channel_weights[i % CONCAT_CHANNELS] += g;
    }
    for w in &mut channel_weights {
        *w /= cells;
    }
    let coarse: Vec<f64> = act
        .concat
        .chunks_exact(CONCAT_CHANNELS)
        .map(|a| a.iter().zip(&channel_weights).map(|(a, w)| a * w).sum::<f64>().max(0.0))
        .collect();
    let up = resize_bilinear(&Plane::new(POOL1_SIDE, POOL1_SIDE, coarse.clone()), N, N);
    let max = up.data.iter().fold(0.0f64, |m, &v| m.max(v));
    let heatmap =
        if max > 0.0 { up.data.iter().map(|v| (v / max).clamp(0.0, 1.0)).collect() } else { vec![0.0; PLANE] };
    Ok(GradCam { heatmap, coarse, channel_weights })
}
