use std::ops::Range;

use rand::Rng;

use crate::pseudolabel::ExpressionClass;

/// Filters in the u, v and strain streams.
pub const FILTERS: [usize; 3] = [3, 5, 8];
pub const KERNEL: usize = 5;
/// Side of each stream's map after the 3x3 stride-3 pool.
pub const POOL1_SIDE: usize = 14;
/// Side of the concatenated map after the 2x2 stride-2 pool.
pub const POOL2_SIDE: usize = 7;
pub const CONCAT_CHANNELS: usize = 16;
pub const FLAT_LEN: usize = POOL2_SIDE * POOL2_SIDE * CONCAT_CHANNELS;
pub const HIDDEN: usize = 400;
pub const PARAMETER_COUNT: usize = 314_817;

/// One named parameter tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: &'static str,
    pub range: Range<usize>,
    /// Fan-in and fan-out used for initialization; zero for biases.
    pub fan: (usize, usize),
}

const NAMES: [&str; 10] = [
    "stream1.kernel",
    "stream1.bias",
    "stream2.kernel",
    "stream2.bias",
    "stream3.kernel",
    "stream3.bias",
    "dense1.weight",
    "dense1.bias",
    "dense2.weight",
    "dense2.bias",
];

/// Parameter tensors in storage (and file) order.
///
/// Kernel `s` stores filter `f`, tap `(ky, kx)` at `f * 25 + ky * 5 + kx`;
/// dense1 is row-major `[out][in]`; flatten order is `(row * 7 + col) * 16 + channel`.
pub fn layers() -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(10);
    let mut at = 0;
    let mut push = |name_idx: usize, len: usize, fan: (usize, usize)| {
        specs.push(LayerSpec { name: NAMES[name_idx], range: at..at + len, fan });
        at += len;
    };
    for (s, &f) in FILTERS.iter().enumerate() {
        push(2 * s, f * KERNEL * KERNEL, (KERNEL * KERNEL, KERNEL * KERNEL * f));
        push(2 * s + 1, f, (0, 0));
    }
    push(6, HIDDEN * FLAT_LEN, (FLAT_LEN, HIDDEN));
    push(7, HIDDEN, (0, 0));
    push(8, HIDDEN, (HIDDEN, 1));
    push(9, 1, (0, 0));
    specs
}

/// Offsets of every tensor, precomputed.
pub(crate) struct Offsets {
    pub kernel: [usize; 3],
    pub bias: [usize; 3],
    pub dense1_w: usize,
    pub dense1_b: usize,
    pub dense2_w: usize,
    pub dense2_b: usize,
}

pub(crate) const OFFSETS: Offsets = {
    let k0 = 0;
    let b0 = k0 + FILTERS[0] * 25;
    let k1 = b0 + FILTERS[0];
    let b1 = k1 + FILTERS[1] * 25;
    let k2 = b1 + FILTERS[1];
    let b2 = k2 + FILTERS[2] * 25;
    let d1w = b2 + FILTERS[2];
    let d1b = d1w + HIDDEN * FLAT_LEN;
    let d2w = d1b + HIDDEN;
    let d2b = d2w + HIDDEN;
    Offsets { kernel: [k0, k1, k2], bias: [b0, b1, b2], dense1_w: d1w, dense1_b: d1b, dense2_w: d2w, dense2_b: d2b }
};

const _: () = assert!(OFFSETS.dense2_b + 1 == PARAMETER_COUNT);

/// Layer name for a flat parameter index.
pub fn layer_of(index: usize) -> &'static str {
    layers().into_iter().find(|l| l.range.contains(&index)).map_or("out of range", |l| l.name)
}

/// The three-stream regression network for one expression class.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftNetModel {
    pub class: ExpressionClass,
    params: Vec<f64>,
}

impl SoftNetModel {
    pub fn zeros(class: ExpressionClass) -> Self {
        Self { class, params: vec![0.0; PARAMETER_COUNT] }
    }

    /// Uniform Glorot initialization of weights, zero biases.
    pub fn glorot<R: Rng>(class: ExpressionClass, rng: &mut R) -> Self {
        let mut m = Self::zeros(class);
        for spec in layers() {
            let (fan_in, fan_out) = spec.fan;
            if fan_in == 0 {
                continue;
            }
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut m.params[spec.range] {
                *w = rng.random_range(-bound..bound);
            }
        }
        m
    }

    /// Builds a model from a flat parameter vector in [`layers`] order.
    pub fn from_params(class: ExpressionClass, params: Vec<f64>) -> crate::Result<Self> {
        if params.len() != PARAMETER_COUNT {
            return Err(crate::Error::ShapeMismatch(format!(
                "{} parameters, expected {PARAMETER_COUNT}",
                params.len()
            )));
        }
        if let Some(i) = params.iter().position(|w| !w.is_finite()) {
            return Err(crate::Error::InvalidParameter(format!("non-finite weight in {}", layer_of(i))));
        }
        Ok(Self { class, params })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn kernel(&self, stream: usize) -> &[f64] {
        let o = OFFSETS.kernel[stream];
        &self.params[o..o + FILTERS[stream] * KERNEL * KERNEL]
    }

    pub fn bias(&self, stream: usize) -> &[f64] {
        let o = OFFSETS.bias[stream];
        &self.params[o..o + FILTERS[stream]]
    }

    pub fn dense1_weight(&self) -> &[f64] {
        &self.params[OFFSETS.dense1_w..OFFSETS.dense1_b]
    }

    pub fn dense1_bias(&self) -> &[f64] {
        &self.params[OFFSETS.dense1_b..OFFSETS.dense2_w]
    }

    pub fn dense2_weight(&self) -> &[f64] {
        &self.params[OFFSETS.dense2_w..OFFSETS.dense2_b]
    }

    pub fn dense2_bias(&self) -> f64 {
        self.params[OFFSETS.dense2_b]
    }

    pub fn set_dense2_bias(&mut self, b: f64) {
        self.params[OFFSETS.dense2_b] = b;
    }

    /// Rounds every weight to the nearest `f32`, the on-disk precision.
    pub fn round_to_f32(&mut self) {
        for w in &mut self.params {
            *w = *w as f32 as f64;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|w| w.is_finite())
    }
}

/// Gradient of the loss with the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn zeros() -> Self {
        Self { values: vec![0.0; PARAMETER_COUNT] }
    }
}
