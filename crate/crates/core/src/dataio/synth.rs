//! Deterministic synthetic datasets: a textured face per subject, expression
//! events rendered as smooth local displacement fields, optional per-frame
//! translation jitter and sensor noise.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::GrayFrame;
use crate::imgproc::{gaussian_blur, sample_bicubic, Plane};
use crate::preprocess::{canonical_landmarks, CROP_SIZE};
use crate::pseudolabel::{ExpressionClass, FrameInterval};

use super::dataset::{
    write_annotations, write_frame, write_landmarks, write_videos, AnnotationRecord, VideoEntry, ANNOTATIONS_FILE,
    FRAMES_DIR, LANDMARKS_DIR, VIDEOS_FILE,
};

/// Border around the 128x128 face inside each frame.
pub const FACE_OFFSET: usize = 16;
pub const FRAME_SIZE: usize = CROP_SIZE + 2 * FACE_OFFSET;
/// Written next to the generated data; its presence marks a directory as
/// safe to regenerate.
pub const SYNTHETIC_MARKER: &str = "synthetic.json";
const TEXTURE_PAD: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub videos: usize,
    /// Videos are assigned to subjects round-robin.
    pub subjects: usize,
    pub frames_per_video: usize,
    pub macro_per_video: usize,
    pub micro_per_video: usize,
    /// Peak displacement in pixels.
    pub macro_amplitude: f64,
    pub micro_amplitude: f64,
    /// Inclusive range of event lengths in frames.
    pub macro_length: [usize; 2],
    pub micro_length: [usize; 2],
    /// Per-frame translation drawn uniformly from `[-jitter, jitter]` pixels.
    pub jitter: f64,
    /// Standard deviation of additive noise in 8-bit gray levels.
    pub noise_std: f64,
    /// Frames kept free of events at each end of a video.
    pub edge_margin: usize,
    /// Minimum number of frames between any two events.
    pub min_gap: usize,
    pub fps: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            videos: 20,
            subjects: 4,
            frames_per_video: 300,
            macro_per_video: 2,
            micro_per_video: 1,
            macro_amplitude: 3.0,
            micro_amplitude: 1.5,
            macro_length: [30, 40],
            micro_length: [9, 13],
            jitter: 0.25,
            noise_std: 1.0,
            edge_margin: 20,
            min_gap: 20,
            fps: 30.0,
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.videos == 0 {
            problems.push("videos must be at least 1".to_string());
        }
        if self.subjects == 0 || self.subjects > self.videos {
            problems.push(format!("subjects must lie in 1..={}, got {}", self.videos, self.subjects));
        }
        if self.frames_per_video < 2 {
            problems.push("frames_per_video must be at least 2".to_string());
        }
        for (name, [lo, hi]) in [("macro_length", self.macro_length), ("micro_length", self.micro_length)] {
            if lo == 0 || lo > hi || hi >= self.frames_per_video {
                problems.push(format!("{name} [{lo}, {hi}] must satisfy 1 <= min <= max < frames_per_video"));
            }
        }
        for (name, a) in [("macro_amplitude", self.macro_amplitude), ("micro_amplitude", self.micro_amplitude)] {
            if !(a.is_finite() && a > 0.0) {
                problems.push(format!("{name} must be positive, got {a}"));
            }
        }
        for (name, v) in [("jitter", self.jitter), ("noise_std", self.noise_std)] {
            if !(v.is_finite() && v >= 0.0) {
                problems.push(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            problems.push(format!("fps must be positive, got {}", self.fps));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(problems.join("; ")))
        }
    }
}

/// One injected expression. Frames are 0-based and inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEvent {
    pub class: ExpressionClass,
    pub onset: usize,
    pub apex: usize,
    pub offset: usize,
    pub amplitude: f64,
}

impl SyntheticEvent {
    pub fn interval(&self) -> FrameInterval {
        FrameInterval::new(self.onset, self.offset).expect("validated event")
    }

    /// Piecewise-linear ramp 0 -> 1 -> 0 across onset, apex, offset.
    pub fn intensity(&self, t: usize) -> f64 {
        if t < self.onset || t > self.offset {
            return 0.0;
        }
        let t = t as f64;
        let (on, ap, off) = (self.onset as f64, self.apex as f64, self.offset as f64);
        if t <= ap {
            if ap > on {
                (t - on) / (ap - on)
            } else {
                1.0
            }
        } else if off > ap {
            (off - t) / (off - ap)
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoPlan {
    pub video_id: String,
    pub subject_id: String,
    pub subject_index: usize,
    pub frames: usize,
    /// Sorted by onset.
    pub events: Vec<SyntheticEvent>,
}

impl VideoPlan {
    pub fn validate(&self) -> Result<()> {
        for e in &self.events {
            if !(e.onset <= e.apex && e.apex <= e.offset && e.offset < self.frames) {
                return Err(Error::InvalidParameter(format!(
                    "event ({}, {}, {}) is not ordered inside {} frames",
                    e.onset, e.apex, e.offset, self.frames
                )));
            }
            if !(e.amplitude.is_finite() && e.amplitude > 0.0) {
                return Err(Error::InvalidParameter(format!("event amplitude {} must be positive", e.amplitude)));
            }
        }
        for (i, a) in self.events.iter().enumerate() {
            for b in &self.events[i + 1..] {
                if a.class == b.class && a.interval().intersection_len(&b.interval()) > 0 {
                    return Err(Error::InvalidParameter(format!(
                        "overlapping {} events [{}, {}] and [{}, {}] in {}",
                        a.class, a.onset, a.offset, b.onset, b.offset, self.video_id
                    )));
                }
            }
        }
        Ok(())
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const SUBJECT_STREAM: u64 = 1 << 32;

fn place_events(config: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Result<Vec<SyntheticEvent>> {
    let mut events: Vec<SyntheticEvent> = Vec::new();
    let wanted = std::iter::repeat_n(
        (ExpressionClass::Macro, config.macro_length, config.macro_amplitude),
        config.macro_per_video,
    )
    .chain(std::iter::repeat_n(
        (ExpressionClass::Micro, config.micro_length, config.micro_amplitude),
        config.micro_per_video,
    ));
    let n = config.frames_per_video;
    for (class, [lo, hi], amplitude) in wanted {
        let mut placed = false;
        for _ in 0..10_000 {
            let len = rng.random_range(lo..=hi);
            let first = config.edge_margin;
            let Some(last) = n.checked_sub(config.edge_margin + len) else { break };
            if last < first {
                break;
            }
            let onset = rng.random_range(first..=last);
            let offset = onset + len - 1;
            let clear = events.iter().all(|e| onset > e.offset + config.min_gap || offset + config.min_gap < e.onset);
            if !clear {
                continue;
            }
            let spread = (len / 6) as i64;
            let shift = if spread > 0 { rng.random_range(-spread..=spread) } else { 0 };
            let apex = (onset as i64 + (len as i64 - 1) / 2 + shift) as usize;
            events.push(SyntheticEvent { class, onset, apex, offset, amplitude });
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::InvalidParameter(format!(
                "cannot place a {class} event of {lo}-{hi} frames in {n} frames \
                 (edge margin {}, gap {})",
                config.edge_margin, config.min_gap
            )));
        }
    }
    events.sort_by_key(|e| e.onset);
    Ok(events)
}

/// Event layout of every video; a pure function of the configuration.
pub fn plan_dataset(config: &SyntheticConfig) -> Result<Vec<VideoPlan>> {
    config.validate()?;
    (0..config.videos)
        .map(|i| {
            let mut rng = rng_for(config.seed, i as u64);
            let subject_index = i % config.subjects;
            let plan = VideoPlan {
                video_id: format!("v{:03}", i + 1),
                subject_id: format!("s{:02}", subject_index + 1),
                subject_index,
                frames: config.frames_per_video,
                events: place_events(config, &mut rng)?,
            };
            plan.validate()?;
            Ok(plan)
        })
        .collect()
}

/// Landmarks of every synthetic frame (the face never moves on average).
pub fn synthetic_landmarks() -> Vec<(f64, f64)> {
    canonical_landmarks(FACE_OFFSET as f64)
}

/// Soft dark feature: an elliptical Gaussian of depth `depth`.
fn blob(x: f64, y: f64, cx: f64, cy: f64, rx: f64, ry: f64) -> f64 {
    let dx = (x - cx) / rx;
    let dy = (y - cy) / ry;
    (-0.5 * (dx * dx + dy * dy)).exp()
}

/// Subject texture on a padded grid: face shading plus band-limited noise.
fn subject_texture(seed: u64, subject: usize) -> Plane {
    let side = FRAME_SIZE + 2 * TEXTURE_PAD;
    let mut rng = rng_for(seed, SUBJECT_STREAM + subject as u64);
    let noise = Plane::new(side, side, (0..side * side).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
    let fine = gaussian_blur(&noise, 1.2);
    let std = (fine.data.iter().map(|v| v * v).sum::<f64>() / fine.data.len() as f64).sqrt();
    let o = (FACE_OFFSET + TEXTURE_PAD) as f64;
    Plane::from_fn(side, side, |x, y| {
        let (fx, fy) = (x as f64 - o, y as f64 - o);
        let mut shade = 150.0;
        shade -= 55.0 * blob(fx, fy, 34.0, 40.0, 9.0, 4.0) + 55.0 * blob(fx, fy, 94.0, 40.0, 9.0, 4.0);
        shade -= 40.0 * blob(fx, fy, 34.0, 3.0, 16.0, 3.0) + 40.0 * blob(fx, fy, 94.0, 3.0, 16.0, 3.0);
        shade -= 45.0 * blob(fx, fy, 64.0, 96.0, 18.0, 4.0);
        shade -= 25.0 * blob(fx, fy, 58.0, 66.0, 3.0, 2.0) + 25.0 * blob(fx, fy, 70.0, 66.0, 3.0, 2.0);
        let v = shade + 32.0 * fine.data[y * side + x] / std;
        v.clamp(8.0, 247.0) / 255.0
    })
}

/// Displacement directions (unit vectors) and centres, in frame coordinates.
struct Motion {
    centre: (f64, f64),
    dir: (f64, f64),
    sigma: f64,
}

fn motions(class: ExpressionClass) -> [Motion; 2] {
    let o = FACE_OFFSET as f64;
    match class {
        // Mouth corners pulled outward and up.
        ExpressionClass::Macro => [
            Motion { centre: (o + 44.0, o + 96.0), dir: (-0.8, -0.6), sigma: 8.0 },
            Motion { centre: (o + 84.0, o + 96.0), dir: (0.8, -0.6), sigma: 8.0 },
        ],
        // Both brows raised.
        ExpressionClass::Micro => [
            Motion { centre: (o + 34.0, o + 4.0), dir: (0.0, -1.0), sigma: 7.0 },
            Motion { centre: (o + 94.0, o + 4.0), dir: (0.0, -1.0), sigma: 7.0 },
        ],
    }
}

/// Renders every frame of `plan`; frames are `FRAME_SIZE` squares in `[0, 1]`.
pub fn render_video(config: &SyntheticConfig, plan: &VideoPlan) -> Result<Vec<GrayFrame>> {
    plan.validate()?;
    let texture = subject_texture(config.seed, plan.subject_index);
    let index = plan.video_id.trim_start_matches('v').parse::<u64>().unwrap_or(0);
    let mut rng = rng_for(config.seed ^ 0x6a69_7474, index);
    let jitters: Vec<(f64, f64)> = (0..plan.frames)
        .map(|_| {
            if config.jitter > 0.0 {
                (rng.random_range(-config.jitter..=config.jitter), rng.random_range(-config.jitter..=config.jitter))
            } else {
                (0.0, 0.0)
            }
        })
        .collect();
    let noise_seeds: Vec<u64> = (0..plan.frames).map(|_| rng.random()).collect();
    (0..plan.frames)
        .into_par_iter()
        .map(|t| {
            let active: Vec<(f64, [Motion; 2])> = plan
                .events
                .iter()
                .filter_map(|e| {
                    let a = e.amplitude * e.intensity(t);
                    (a > 0.0).then(|| (a, motions(e.class)))
                })
                .collect();
            let (jx, jy) = jitters[t];
            let mut noise = ChaCha8Rng::seed_from_u64(noise_seeds[t]);
            let pad = TEXTURE_PAD as f64;
            let mut data = Vec::with_capacity(FRAME_SIZE * FRAME_SIZE);
            for y in 0..FRAME_SIZE {
                for x in 0..FRAME_SIZE {
                    let (px, py) = (x as f64, y as f64);
                    let (mut dx, mut dy) = (jx, jy);
                    for (a, ms) in &active {
                        for m in ms {
                            let w = a * blob(px, py, m.centre.0, m.centre.1, m.sigma, m.sigma);
                            dx += w * m.dir.0;
                            dy += w * m.dir.1;
                        }
                    }
                    let mut v = sample_bicubic(&texture, px + pad - dx, py + pad - dy);
                    if config.noise_std > 0.0 {
                        v += config.noise_std / 255.0 * noise.sample::<f64, _>(StandardNormal);
                    }
                    // Quantize as an 8-bit camera would.
                    data.push(((v * 255.0).round().clamp(0.0, 255.0) / 255.0) as f32);
                }
            }
            GrayFrame::new(FRAME_SIZE, FRAME_SIZE, data)
        })
        .collect()
}

/// Ground-truth annotations of a plan.
pub fn plan_annotations(plan: &VideoPlan) -> Vec<AnnotationRecord> {
    plan.events
        .iter()
        .map(|e| AnnotationRecord {
            video_id: plan.video_id.clone(),
            subject_id: plan.subject_id.clone(),
            class: e.class,
            interval: e.interval(),
            apex: Some(e.apex),
        })
        .collect()
}

fn prepare_root(root: &Path) -> Result<()> {
    if root.exists() {
        let non_empty = std::fs::read_dir(root)?.next().is_some();
        if non_empty {
            if !root.join(SYNTHETIC_MARKER).exists() {
                return Err(Error::Dataset(format!(
                    "{} exists and is not a synthetic dataset; refusing to overwrite",
                    root.display()
                )));
            }
            for sub in [FRAMES_DIR, LANDMARKS_DIR] {
                let p = root.join(sub);
                if p.exists() {
                    std::fs::remove_dir_all(p)?;
                }
            }
        }
    }
    std::fs::create_dir_all(root.join(FRAMES_DIR))?;
    std::fs::create_dir_all(root.join(LANDMARKS_DIR))?;
    Ok(())
}

/// Writes a complete dataset (frames, landmarks, `videos.csv`,
/// `annotations.csv` and the configuration) under `root`.
pub fn generate_synthetic(config: &SyntheticConfig, root: &Path) -> Result<Vec<VideoPlan>> {
    let plans = plan_dataset(config)?;
    prepare_root(root)?;
    let landmarks = synthetic_landmarks();
    for plan in &plans {
        let frames = render_video(config, plan)?;
        let dir = root.join(FRAMES_DIR).join(&plan.video_id);
        std::fs::create_dir_all(&dir)?;
        frames.par_iter().enumerate().try_for_each(|(i, f)| write_frame(&dir.join(format!("{:05}.png", i + 1)), f))?;
        write_landmarks(&root.join(LANDMARKS_DIR).join(format!("{}.csv", plan.video_id)), &landmarks)?;
    }
    let entries: Vec<VideoEntry> = plans
        .iter()
        .map(|p| VideoEntry { video_id: p.video_id.clone(), subject_id: p.subject_id.clone(), fps: config.fps })
        .collect();
    write_videos(&root.join(VIDEOS_FILE), &entries)?;
    let annotations: Vec<AnnotationRecord> = plans.iter().flat_map(plan_annotations).collect();
    write_annotations(&root.join(ANNOTATIONS_FILE), &annotations)?;
    std::fs::write(root.join(SYNTHETIC_MARKER), serde_json::to_string_pretty(config)? + "\n")?;
    Ok(plans)
}
