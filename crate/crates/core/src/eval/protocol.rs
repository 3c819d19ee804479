//! The leave-one-subject-out protocol. Scoring (feature extraction, training,
//! inference) and evaluation (spotting, matching) are separate so that a
//! threshold sweep re-runs only the cheap second half.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, VideoRecord};
use crate::error::{Error, Result};
use crate::flow::TvL1Params;
use crate::preprocess::MotionInput;
use crate::pseudolabel::{generate_labels, ExpressionClass, FrameInterval};
use crate::softnet::{build_training_set, predict_series, train, TrainConfig, VideoSamples};
use crate::spotting::{spot_detailed, ScoreSeries};

use super::folds::{loso_folds, Fold};
use super::metrics::{ap_range, match_intervals, precision_recall_f1, GroundTruth, MatchCounts, Prediction};

/// Window length and training settings of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSettings {
    pub k: usize,
    #[serde(default)]
    pub train: TrainConfig,
}

impl ClassSettings {
    pub fn new(class: ExpressionClass, k: usize) -> Self {
        Self { k, train: TrainConfig::for_class(class) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Classes to run, each fully independently.
    pub classes: Vec<ExpressionClass>,
    #[serde(rename = "macro")]
    pub macro_settings: ClassSettings,
    #[serde(rename = "micro")]
    pub micro_settings: ClassSettings,
    pub p: f64,
    pub iou_threshold: f64,
    /// Base seed; each fold and class trains with a seed derived from it.
    pub seed: u64,
    pub tvl1: TvL1Params,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            classes: ExpressionClass::ALL.to_vec(),
            macro_settings: ClassSettings::new(ExpressionClass::Macro, 18),
            micro_settings: ClassSettings::new(ExpressionClass::Micro, 6),
            p: 0.55,
            iou_threshold: 0.5,
            seed: 0,
            tvl1: TvL1Params::default(),
        }
    }
}

impl ProtocolConfig {
    pub fn settings(&self, class: ExpressionClass) -> &ClassSettings {
        match class {
            ExpressionClass::Macro => &self.macro_settings,
            ExpressionClass::Micro => &self.micro_settings,
        }
    }

    pub fn settings_mut(&mut self, class: ExpressionClass) -> &mut ClassSettings {
        match class {
            ExpressionClass::Macro => &mut self.macro_settings,
            ExpressionClass::Micro => &mut self.micro_settings,
        }
    }

    /// All problems at once, joined.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.classes.is_empty() {
            problems.push("no expression class selected".to_string());
        }
        for class in ExpressionClass::ALL {
            let s = self.settings(class);
            if s.k == 0 {
                problems.push(format!("{class}: k must be at least 1"));
            }
            if let Err(e) = s.train.validate() {
                problems.push(format!("{class}: {e}"));
            }
        }
        if !(0.0..=1.0).contains(&self.p) {
            problems.push(format!("p must lie in [0, 1], got {}", self.p));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            problems.push(format!("iou_threshold must lie in (0, 1], got {}", self.iou_threshold));
        }
        if let Err(e) = self.tvl1.validate() {
            problems.push(format!("tvl1: {e}"));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(problems.join("; ")))
        }
    }

    /// Training seed of one fold and class.
    pub fn training_seed(&self, fold: usize, class: ExpressionClass) -> u64 {
        let c = match class {
            ExpressionClass::Macro => 0,
            ExpressionClass::Micro => 1,
        };
        self.seed ^ (((fold as u64) << 1 | c) << 32)
    }
}

/// Raw scores of one test video, produced by the model of its fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoScores {
    pub video_id: String,
    pub subject_id: String,
    pub raw: ScoreSeries,
    pub ground_truth: Vec<FrameInterval>,
}

/// Summary of training one fold model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldTraining {
    pub test_subject: String,
    pub seed: u64,
    pub train_videos: usize,
    pub train_samples: usize,
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: ExpressionClass,
    pub k: usize,
    /// Dataset video order.
    pub videos: Vec<VideoScores>,
    /// Fold order.
    pub training: Vec<FoldTraining>,
}

/// Output of [`score_dataset`]: everything evaluation needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedScores {
    pub config: ProtocolConfig,
    pub folds: Vec<Fold>,
    pub classes: Vec<ClassScores>,
}

/// Precision, recall, F1 and AP@[.5:.95] with the counts they come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(flatten)]
    pub counts: MatchCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ap_50_95: f64,
}

impl Metrics {
    pub fn new(counts: MatchCounts, ap_50_95: f64) -> Self {
        let (precision, recall, f1) = precision_recall_f1(counts);
        Self { counts, precision, recall, f1, ap_50_95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: ExpressionClass,
    pub k: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
}

/// Inclusive 1-based frame range as written in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportInterval {
    pub onset: usize,
    pub offset: usize,
}

impl From<FrameInterval> for ReportInterval {
    fn from(i: FrameInterval) -> Self {
        Self { onset: i.onset() + 1, offset: i.offset() + 1 }
    }
}

/// A spotted interval as written in reports (1-based frames).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSpot {
    pub onset: usize,
    pub offset: usize,
    pub peak: usize,
    pub confidence: f64,
    pub true_positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoReport {
    pub video_id: String,
    pub subject_id: String,
    pub class: ExpressionClass,
    /// `None` when the video is too short to be spotted.
    pub threshold: Option<f64>,
    pub ground_truth: Vec<ReportInterval>,
    pub spots: Vec<ReportSpot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub test_subject: String,
    pub train_subjects: Vec<String>,
    pub training: Vec<(ExpressionClass, FoldTraining)>,
}

/// Full protocol result. Field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ProtocolConfig,
    /// Threshold parameter and IoU threshold actually used.
    pub p: f64,
    pub iou_threshold: f64,
    pub classes: Vec<ClassReport>,
    /// Counts pooled over classes; AP is the mean of the class APs.
    pub overall: Metrics,
    pub folds: Vec<FoldReport>,
    pub videos: Vec<VideoReport>,
}

impl EvalReport {
    pub fn class(&self, class: ExpressionClass) -> Option<&ClassReport> {
        self.classes.iter().find(|c| c.class == class)
    }
}

/// Source of per-video features for a pair distance `k`.
pub trait FeatureSource: Sync {
    fn features(&self, video: &VideoRecord, k: usize) -> Result<Vec<MotionInput>>;
}

impl<F> FeatureSource for F
where
    F: Fn(&VideoRecord, usize) -> Result<Vec<MotionInput>> + Sync,
{
    fn features(&self, video: &VideoRecord, k: usize) -> Result<Vec<MotionInput>> {
        self(video, k)
    }
}

fn score_class(
    dataset: &Dataset,
    config: &ProtocolConfig,
    folds: &[Fold],
    class: ExpressionClass,
    source: &dyn FeatureSource,
) -> Result<ClassScores> {
    let settings = config.settings(class);
    let k = settings.k;
    let mut features = Vec::with_capacity(dataset.videos.len());
    let mut labels = Vec::with_capacity(dataset.videos.len());
    for v in &dataset.videos {
        let f = source.features(v, k)?;
        if f.len() + k != v.frame_count() {
            return Err(Error::Misaligned {
                video: v.video_id.clone(),
                features: f.len(),
                labels: v.frame_count().saturating_sub(k),
            });
        }
        features.push(f);
        let gt = dataset.intervals(&v.video_id, class);
        labels.push(generate_labels(v.frame_count(), k, &gt, settings.train.label_function, class)?);
    }

    let per_fold: Vec<(FoldTraining, Vec<(usize, ScoreSeries)>)> = folds
        .par_iter()
        .enumerate()
        .map(|(fi, fold)| -> Result<_> {
            let seed = config.training_seed(fi, class);
            let train_cfg = TrainConfig { seed, ..settings.train.clone() };
            let train_idx: Vec<usize> = (0..dataset.videos.len())
                .filter(|&i| fold.train_subjects.contains(&dataset.videos[i].subject_id))
                .collect();
            let samples_in: Vec<VideoSamples<'_>> = train_idx
                .iter()
                .map(|&i| VideoSamples {
                    video_id: &dataset.videos[i].video_id,
                    features: &features[i],
                    labels: &labels[i],
                })
                .collect();
            let samples = build_training_set(&samples_in, &train_cfg)?;
            let (model, report) = train(&samples, class, &train_cfg)?;
            let scores = dataset
                .videos
                .iter()
                .enumerate()
                .filter(|(_, v)| v.subject_id == fold.test_subject)
                .map(|(i, v)| Ok((i, predict_series(&model, &features[i], &v.video_id, v.frame_count())?)))
                .collect::<Result<Vec<_>>>()?;
            let summary = FoldTraining {
                test_subject: fold.test_subject.clone(),
                seed,
                train_videos: train_idx.len(),
                train_samples: samples.len(),
                epoch_losses: report.epoch_losses,
            };
            Ok((summary, scores))
        })
        .collect::<Result<_>>()?;

    let mut raw: Vec<Option<ScoreSeries>> = vec![None; dataset.videos.len()];
    let mut training = Vec::with_capacity(folds.len());
    for (summary, scores) in per_fold {
        training.push(summary);
        for (i, s) in scores {
            raw[i] = Some(s);
        }
    }
    let videos = dataset
        .videos
        .iter()
        .zip(raw)
        .map(|(v, s)| VideoScores {
            video_id: v.video_id.clone(),
            subject_id: v.subject_id.clone(),
            raw: s.expect("every subject is tested in exactly one fold"),
            ground_truth: dataset.intervals(&v.video_id, class),
        })
        .collect();
    Ok(ClassScores { class, k, videos, training })
}

/// Trains one model per fold and class and scores every held-out video.
///
/// Folds run in parallel; results are assembled in fold and video order, so
/// the output does not depend on the number of threads.
pub fn score_dataset(dataset: &Dataset, config: &ProtocolConfig, source: &dyn FeatureSource) -> Result<CachedScores> {
    config.validate()?;
    let folds = loso_folds(dataset.videos.iter().map(|v| v.subject_id.as_str()))?;
    let mut classes = Vec::new();
    for &class in ExpressionClass::ALL.iter().filter(|c| config.classes.contains(c)) {
        classes.push(score_class(dataset, config, &folds, class, source)?);
    }
    Ok(CachedScores { config: config.clone(), folds, classes })
}

/// Spots every cached series with threshold parameter `p` and matches the
/// result against the ground truth at `iou_threshold`.
pub fn evaluate_scores(cached: &CachedScores, p: f64, iou_threshold: f64) -> Result<EvalReport> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("p must lie in [0, 1], got {p}")));
    }
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!("iou_threshold must lie in (0, 1], got {iou_threshold}")));
    }
    let mut classes = Vec::new();
    let mut videos = Vec::new();
    let mut class_ap = Vec::new();
    for cs in &cached.classes {
        let mut predictions = Vec::new();
        let mut ground_truth = Vec::new();
        let mut thresholds = Vec::new();
        for (group, v) in cs.videos.iter().enumerate() {
            ground_truth.extend(v.ground_truth.iter().map(|&interval| GroundTruth { group, interval }));
            if v.raw.len() < 2 * cs.k + 1 {
                thresholds.push(None);
                continue;
            }
            let outcome = spot_detailed(&v.raw, cs.k, p)?;
            thresholds.push(Some(outcome.threshold));
            predictions.extend(outcome.spots.iter().map(|s| Prediction {
                group,
                interval: s.interval,
                peak_frame: s.peak_frame,
                confidence: s.confidence,
            }));
        }
        let matched = match_intervals(&predictions, &ground_truth, iou_threshold);
        let ap = ap_range(&predictions, &ground_truth);
        class_ap.push(ap);
        classes.push(ClassReport { class: cs.class, k: cs.k, metrics: Metrics::new(matched.counts, ap) });

        let mut spots_by_video: Vec<Vec<ReportSpot>> = vec![Vec::new(); cs.videos.len()];
        for (pred, &tp) in predictions.iter().zip(&matched.true_positive) {
            spots_by_video[pred.group].push(ReportSpot {
                onset: pred.interval.onset() + 1,
                offset: pred.interval.offset() + 1,
                peak: pred.peak_frame + 1,
                confidence: pred.confidence,
                true_positive: tp,
            });
        }
        for ((v, spots), threshold) in cs.videos.iter().zip(spots_by_video).zip(thresholds) {
            videos.push(VideoReport {
                video_id: v.video_id.clone(),
                subject_id: v.subject_id.clone(),
                class: cs.class,
                threshold,
                ground_truth: v.ground_truth.iter().map(|&i| i.into()).collect(),
                spots,
            });
        }
    }
    let pooled: MatchCounts = classes.iter().map(|c| c.metrics.counts).sum();
    let mean_ap = if class_ap.is_empty() { 0.0 } else { class_ap.iter().sum::<f64>() / class_ap.len() as f64 };
    let folds = cached
        .folds
        .iter()
        .enumerate()
        .map(|(fi, f)| FoldReport {
            test_subject: f.test_subject.clone(),
            train_subjects: f.train_subjects.clone(),
            training: cached.classes.iter().map(|c| (c.class, c.training[fi].clone())).collect(),
        })
        .collect();
    let mut config = cached.config.clone();
    config.p = p;
    config.iou_threshold = iou_threshold;
    Ok(EvalReport { config, p, iou_threshold, classes, overall: Metrics::new(pooled, mean_ap), folds, videos })
}

/// Scores with `source` and evaluates at the configured `p` and IoU threshold.
pub fn run_protocol(dataset: &Dataset, config: &ProtocolConfig, source: &dyn FeatureSource) -> Result<EvalReport> {
    let cached = score_dataset(dataset, config, source)?;
    evaluate_scores(&cached, config.p, config.iou_threshold)
}

/// `0.05, 0.10, ..., 0.95`.
pub fn default_p_grid() -> Vec<f64> {
    (1..=19).map(|i| (5 * i) as f64 / 100.0).collect()
}

/// One line of a threshold sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: f64,
    pub macro_metrics: Option<Metrics>,
    pub micro_metrics: Option<Metrics>,
    pub overall: Metrics,
    /// Spot count of every (class, video) pair in report order.
    pub spots_per_video: Vec<usize>,
}

impl SweepRow {
    pub fn total_spots(&self) -> usize {
        self.spots_per_video.iter().sum()
    }
}

/// Re-evaluates cached scores at every `p`.
pub fn sweep_p(cached: &CachedScores, p_values: &[f64], iou_threshold: f64) -> Result<Vec<SweepRow>> {
    p_values
        .iter()
        .map(|&p| {
            let r = evaluate_scores(cached, p, iou_threshold)?;
            Ok(SweepRow {
                p,
                macro_metrics: r.class(ExpressionClass::Macro).map(|c| c.metrics.clone()),
                micro_metrics: r.class(ExpressionClass::Micro).map(|c| c.metrics.clone()),
                spots_per_video: r.videos.iter().map(|v| v.spots.len()).collect(),
                overall: r.overall,
            })
        })
        .collect()
}

/// Sweep rows as CSV: one header line and one line per row.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "p,macro_tp,macro_fp,macro_fn,macro_f1,micro_tp,micro_fp,micro_fn,micro_f1,\
         overall_tp,overall_fp,overall_fn,overall_f1,spots\n",
    );
    let cells = |m: &Option<Metrics>| match m {
        Some(m) => format!("{},{},{},{:.6}", m.counts.tp, m.counts.fp, m.counts.fn_, m.f1),
        None => ",,,".to_string(),
    };
    for r in rows {
        let o = &r.overall;
        out.push_str(&format!(
            "{:.2},{},{},{},{},{},{:.6},{}\n",
            r.p,
            cells(&r.macro_metrics),
            cells(&r.micro_metrics),
            o.counts.tp,
            o.counts.fp,
            o.counts.fn_,
            o.f1,
            r.total_spots()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(id: &str, scores: Vec<f64>, class: ExpressionClass) -> ScoreSeries {
        let n = scores.len() + 2;
        ScoreSeries::new(scores, 0, id, class, n).unwrap()
    }

    /// Two videos, one bump each; the first bump matches its annotation.
    fn cached() -> CachedScores {
        let bump =
            |centre: f64| -> Vec<f64> { (0..60).map(|i| (-((i as f64 - centre) / 3.0).powi(2)).exp()).collect() };
        let k = 2;
        let mk = |id: &str, subj: &str, c: f64, gt: (usize, usize)| VideoScores {
            video_id: id.into(),
            subject_id: subj.into(),
            raw: series(id, bump(c), ExpressionClass::Micro),
            ground_truth: vec![FrameInterval::new(gt.0, gt.1).unwrap()],
        };
        let training = |s: &str| FoldTraining {
            test_subject: s.into(),
            seed: 0,
            train_videos: 1,
            train_samples: 10,
            epoch_losses: vec![0.1],
        };
        CachedScores {
            config: ProtocolConfig { classes: vec![ExpressionClass::Micro], ..ProtocolConfig::default() },
            folds: loso_folds(["a", "b"]).unwrap(),
            classes: vec![ClassScores {
                class: ExpressionClass::Micro,
                k,
                videos: vec![mk("v1", "a", 20.0, (18, 22)), mk("v2", "b", 40.0, (5, 9))],
                training: vec![training("a"), training("b")],
            }],
        }
    }

    #[test]
    fn evaluation_counts_and_report_indices() {
        let r = evaluate_scores(&cached(), 0.5, 0.5).unwrap();
        let c = r.class(ExpressionClass::Micro).unwrap();
        assert_eq!(c.metrics.counts, MatchCounts::new(1, 1, 1));
        assert_eq!(r.overall.counts, c.metrics.counts);
        assert_eq!(r.videos.len(), 2);
        let s = &r.videos[0].spots[0];
        assert_eq!((s.onset, s.offset, s.peak, s.true_positive), (19, 23, 21, true));
        assert_eq!(r.videos[0].ground_truth, vec![ReportInterval { onset: 19, offset: 23 }]);
        assert!(!r.videos[1].spots[0].true_positive);
        assert_eq!(r.folds.len(), 2);
        assert_eq!(r.config.p, 0.5);
    }

    #[test]
    fn conservation_and_f1_consistency() {
        for p in default_p_grid() {
            let r = evaluate_scores(&cached(), p, 0.5).unwrap();
            for c in &r.classes {
                assert_eq!(c.metrics.counts.tp + c.metrics.counts.fn_, 2);
                let (pr, rc, f1) = precision_recall_f1(c.metrics.counts);
                assert_eq!((pr, rc, f1), (c.metrics.precision, c.metrics.recall, c.metrics.f1));
            }
        }
    }

    #[test]
    fn sweep_matches_independent_evaluations() {
        let c = cached();
        let grid = default_p_grid();
        assert_eq!(grid.len(), 19);
        assert_eq!(grid[0], 0.05);
        assert_eq!(grid[18], 0.95);
        let rows = sweep_p(&c, &grid, 0.5).unwrap();
        for (row, &p) in rows.iter().zip(&grid) {
            let r = evaluate_scores(&c, p, 0.5).unwrap();
            assert_eq!(row.overall, r.overall);
            assert_eq!(row.micro_metrics.as_ref(), Some(&r.classes[0].metrics));
            assert!(row.macro_metrics.is_none());
        }
        for w in rows.windows(2) {
            for (a, b) in w[0].spots_per_video.iter().zip(&w[1].spots_per_video) {
                assert!(b <= a);
            }
        }
        let csv = sweep_csv(&rows);
        assert_eq!(csv.lines().count(), 20);
        assert!(csv.lines().nth(1).unwrap().starts_with("0.05,,,,,1,1,1,"));
    }

    #[test]
    fn short_videos_are_not_spotted() {
        let mut c = cached();
        c.classes[0].videos[1].raw.scores.truncate(4);
        let r = evaluate_scores(&c, 0.5, 0.5).unwrap();
        assert_eq!(r.videos[1].threshold, None);
        assert!(r.videos[1].spots.is_empty());
        assert_eq!(r.classes[0].metrics.counts, MatchCounts::new(1, 0, 1));
    }

    #[test]
    fn config_validation_lists_every_problem() {
        let mut c = ProtocolConfig { p: 1.5, iou_threshold: 0.0, ..ProtocolConfig::default() };
        c.micro_settings.k = 0;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("p must") && msg.contains("iou_threshold") && msg.contains("micro: k"), "{msg}");
        assert!(ProtocolConfig::default().validate().is_ok());
        assert!(evaluate_scores(&cached(), 1.2, 0.5).is_err());
    }

    #[test]
    fn training_seeds_differ_per_fold_and_class() {
        let c = ProtocolConfig { seed: 7, ..ProtocolConfig::default() };
        let mut seen = std::collections::BTreeSet::new();
        for f in 0..5 {
            for class in ExpressionClass::ALL {
                assert!(seen.insert(c.training_seed(f, class)));
            }
        }
    }

    #[test]
    fn report_json_round_trip() {
        let r = evaluate_scores(&cached(), 0.55, 0.5).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"fn\":1"));
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
