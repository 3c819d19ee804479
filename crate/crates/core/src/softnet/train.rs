use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{convolve_separable, gaussian_kernel, Plane};
use crate::preprocess::{MotionInput, INPUT_SIZE};
use crate::pseudolabel::{ExpressionClass, LabelFunction, LabelSet};
use crate::spotting::ScoreSeries;

use super::model::SoftNetModel;
use super::network::{predict, train_step};

pub const AUGMENT_BLUR_SIGMA: f64 = 1.17;
pub const AUGMENT_BLUR_RADIUS: usize = 3;
/// Mixed into the training seed for the augmentation noise stream.
const AUGMENT_STREAM: u64 = 0x5eed_a11c;

/// Training hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Keep one of every `n` zero-target samples.
    pub negative_sample_rate: usize,
    pub augment: bool,
    pub label_function: LabelFunction,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            epochs: 10,
            seed: 0,
            negative_sample_rate: 2,
            augment: false,
            label_function: LabelFunction::UnitStep,
        }
    }
}

impl TrainConfig {
    /// Defaults for a class: augmentation is used for micro-expressions only.
    pub fn for_class(class: ExpressionClass) -> Self {
        Self { augment: class == ExpressionClass::Micro, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            problems.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.epochs == 0 {
            problems.push("epochs must be at least 1".to_string());
        }
        if self.negative_sample_rate == 0 {
            problems.push("negative_sample_rate must be at least 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub input: MotionInput,
    pub target: f64,
    pub video_id: String,
    pub frame_index: usize,
}

fn flip_plane(c: &[f32], negate: bool) -> Vec<f32> {
    let mut out = Vec::with_capacity(c.len());
    for row in c.chunks_exact(INPUT_SIZE) {
        out.extend(row.iter().rev().map(|&v| if negate { -v } else { v }));
    }
    out
}

fn blur_plane(c: &[f32], kernel: &[f64]) -> Vec<f32> {
    let p = Plane::new(INPUT_SIZE, INPUT_SIZE, c.iter().map(|&v| v as f64).collect());
    convolve_separable(&p, kernel).data.iter().map(|&v| v as f32).collect()
}

fn noise_plane<R: Rng>(c: &[f32], rng: &mut R, non_negative: bool) -> Vec<f32> {
    let n = c.len() as f64;
    let mean = c.iter().map(|&v| v as f64).sum::<f64>() / n;
    let std = (c.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
    c.iter()
        .map(|&v| {
            let z: f64 = rng.sample(StandardNormal);
            let x = (v as f64 + std * z) as f32;
            // Strain is a magnitude; noise must not make it negative.
            if non_negative {
                x.max(0.0)
            } else {
                x
            }
        })
        .collect()
}

/// Horizontal mirror of every channel, with the horizontal flow negated.
pub fn flip_input(m: &MotionInput) -> MotionInput {
    MotionInput {
        u: flip_plane(&m.u, true),
        v: flip_plane(&m.v, false),
        strain: flip_plane(&m.strain, false),
        source_frame_index: m.source_frame_index,
    }
}

/// The sample followed by its flipped, blurred and noised variants.
pub fn augment<R: Rng>(sample: &TrainingSample, rng: &mut R) -> Vec<TrainingSample> {
    let kernel = gaussian_kernel(AUGMENT_BLUR_SIGMA, AUGMENT_BLUR_RADIUS);
    let m = &sample.input;
    let variant = |input: MotionInput| TrainingSample { input, ..sample.clone() };
    let blurred = MotionInput {
        u: blur_plane(&m.u, &kernel),
        v: blur_plane(&m.v, &kernel),
        strain: blur_plane(&m.strain, &kernel),
        source_frame_index: m.source_frame_index,
    };
    let noised = MotionInput {
        u: noise_plane(&m.u, rng, false),
        v: noise_plane(&m.v, rng, false),
        strain: noise_plane(&m.strain, rng, true),
        source_frame_index: m.source_frame_index,
    };
    vec![sample.clone(), variant(flip_input(m)), variant(blurred), variant(noised)]
}

/// Features and labels of one video, aligned by window position.
#[derive(Debug, Clone, Copy)]
pub struct VideoSamples<'a> {
    pub video_id: &'a str,
    pub features: &'a [MotionInput],
    pub labels: &'a LabelSet,
}

/// Keeps every positive window and every `n`-th zero window of each video;
/// with augmentation on, each retained positive also contributes its three
/// augmented variants.
pub fn build_training_set(videos: &[VideoSamples<'_>], config: &TrainConfig) -> Result<Vec<TrainingSample>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ AUGMENT_STREAM);
    let mut out = Vec::new();
    for video in videos {
        if video.features.len() != video.labels.scores.len() {
            return Err(Error::Misaligned {
                video: video.video_id.to_string(),
                features: video.features.len(),
                labels: video.labels.scores.len(),
            });
        }
        let mut negatives = 0usize;
        for (i, (input, &target)) in video.features.iter().zip(&video.labels.scores).enumerate() {
            if !(0.0..=1.0).contains(&target) {
                return Err(Error::InvalidParameter(format!("target {target} outside [0, 1]")));
            }
            if target == 0.0 {
                let keep = negatives.is_multiple_of(config.negative_sample_rate);
                negatives += 1;
                if !keep {
                    continue;
                }
            }
            let sample =
                TrainingSample { input: input.clone(), target, video_id: video.video_id.to_string(), frame_index: i };
            if config.augment && target > 0.0 {
                out.extend(augment(&sample, &mut rng));
            } else {
                out.push(sample);
            }
        }
    }
    Ok(out)
}

/// Per-epoch mean loss recorded during training.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

/// Seeded Glorot initialization followed by per-sample SGD over
/// `config.epochs` shuffled passes. The final weights are rounded to `f32` so
/// that the in-memory model equals its saved form.
pub fn train(
    samples: &[TrainingSample],
    class: ExpressionClass,
    config: &TrainConfig,
) -> Result<(SoftNetModel, TrainReport)> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = SoftNetModel::glorot(class, &mut rng);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let s = &samples[i];
            total += train_step(&mut model, &s.input, s.target, config.learning_rate)?;
        }
        let mean = total / samples.len() as f64;
        if !mean.is_finite() || !model.is_finite() {
            return Err(Error::Diverged { epoch: epoch + 1 });
        }
        report.epoch_losses.push(mean);
    }
    model.round_to_f32();
    Ok((model, report))
}

/// One score per input, in input order.
pub fn predict_scores(model: &SoftNetModel, features: &[MotionInput]) -> Result<Vec<f64>> {
    features.par_iter().map(|x| predict(model, x)).collect()
}

/// Scores wrapped as a series: input `i` belongs to frame `i`.
pub fn predict_series(
    model: &SoftNetModel,
    features: &[MotionInput],
    video_id: &str,
    frame_count: usize,
) -> Result<ScoreSeries> {
    ScoreSeries::new(predict_scores(model, features)?, 0, video_id, model.class, frame_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pseudolabel::ExpressionClass;

    fn input(seed: u64) -> MotionInput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = INPUT_SIZE * INPUT_SIZE;
        let u = (0..n).map(|_| rng.random_range(-2.0f32..2.0)).collect();
        let v = (0..n).map(|_| rng.random_range(-2.0f32..2.0)).collect();
        let s = (0..n).map(|_| rng.random_range(0.0f32..1.0)).collect();
        MotionInput::new(u, v, s, 3).unwrap()
    }

    fn sample(seed: u64, target: f64) -> TrainingSample {
        TrainingSample { input: input(seed), target, video_id: "v".into(), frame_index: 0 }
    }

    #[test]
    fn flip_is_an_involution_and_mirrors_pixels() {
        let x = input(1);
        let f = flip_input(&x);
        assert_eq!(flip_input(&f), x);
        for r in 0..INPUT_SIZE {
            for c in 0..INPUT_SIZE {
                let (a, b) = (r * INPUT_SIZE + c, r * INPUT_SIZE + INPUT_SIZE - 1 - c);
                assert_eq!(f.strain[a], x.strain[b]);
                assert_eq!(f.v[a], x.v[b]);
                assert_eq!(f.u[a], -x.u[b]);
            }
        }
    }

    #[test]
    fn augmentation_variants() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut constant = sample(2, 0.5);
        constant.input.strain = vec![0.25; 1764];
        let out = augment(&constant, &mut rng);
        assert_eq!(out.len(), 4);
        assert_eq!(out[0], constant);
        assert!(out.iter().all(|s| s.target == 0.5));
        assert!(out[2].input.strain.iter().all(|&v| (v - 0.25).abs() < 1e-6));
        // Constant channel: zero deviation, so noise leaves it unchanged.
        assert_eq!(out[3].input.strain, constant.input.strain);
        assert_ne!(out[3].input.u, constant.input.u);
        assert!(out.iter().all(|s| s.input.strain.iter().all(|&v| v >= 0.0)));
    }

    fn labels(scores: Vec<f64>) -> LabelSet {
        LabelSet { scores, class: ExpressionClass::Micro }
    }

    #[test]
    fn negative_subsampling_and_augmentation_counts() {
        let feats: Vec<MotionInput> = (0..10).map(MotionInput::zeros).collect();
        let neg = labels(vec![0.0; 10]);
        let cfg = TrainConfig::default();
        let v = [VideoSamples { video_id: "a", features: &feats, labels: &neg }];
        let set = build_training_set(&v, &cfg).unwrap();
        assert_eq!(set.iter().map(|s| s.frame_index).collect::<Vec<_>>(), vec![0, 2, 4, 6, 8]);

        let pos = labels(vec![1.0; 10]);
        let v = [VideoSamples { video_id: "a", features: &feats, labels: &pos }];
        assert_eq!(build_training_set(&v, &cfg).unwrap().len(), 10);

        let one = labels(vec![0.0, 0.0, 1.0, 0.0]);
        let v = [VideoSamples { video_id: "a", features: &feats[..4], labels: &one }];
        let micro = TrainConfig::for_class(ExpressionClass::Micro);
        let set = build_training_set(&v, &micro).unwrap();
        assert_eq!(set.iter().filter(|s| s.frame_index == 2).count(), 4);
        assert_eq!(set.len(), 4 + 2);

        let v = [VideoSamples { video_id: "a", features: &feats[..3], labels: &one }];
        assert!(matches!(build_training_set(&v, &cfg), Err(Error::Misaligned { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { negative_sample_rate: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig::for_class(ExpressionClass::Micro).augment);
        assert!(!TrainConfig::for_class(ExpressionClass::Macro).augment);
    }

    #[test]
    fn training_is_reproducible_and_fits_one_sample() {
        let samples = vec![sample(4, 0.8)];
        let cfg = TrainConfig { epochs: 500, seed: 11, ..Default::default() };
        let (a, report) = train(&samples, ExpressionClass::Macro, &cfg).unwrap();
        let (b, _) = train(&samples, ExpressionClass::Macro, &cfg).unwrap();
        assert!(a.params() == b.params());
        let s = predict(&a, &samples[0].input).unwrap();
        assert!((s - 0.8).abs() < 0.05, "prediction {s}");
        assert!(report.epoch_losses.last().unwrap() < &report.epoch_losses[0]);
        assert!(a.params().iter().all(|&w| w == w as f32 as f64));
        assert!(matches!(train(&[], ExpressionClass::Macro, &cfg), Err(Error::EmptyDataset)));
    }

    #[test]
    fn prediction_preserves_order() {
        let m = SoftNetModel::glorot(ExpressionClass::Macro, &mut ChaCha8Rng::seed_from_u64(1));
        let xs: Vec<MotionInput> = (0..5).map(input).collect();
        let scores = predict_scores(&m, &xs).unwrap();
        for (x, s) in xs.iter().zip(&scores) {
            assert_eq!(predict(&m, x).unwrap(), *s);
        }
        assert!(predict_scores(&m, &[]).unwrap().is_empty());
        let series = predict_series(&m, &xs, "v", 11).unwrap();
        assert_eq!((series.len(), series.offset, series.frame_count), (5, 0, 11));
    }
}
