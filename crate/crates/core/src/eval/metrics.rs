use serde::{Deserialize, Serialize};

use crate::pseudolabel::{interval_iou, FrameInterval};

/// The ten IoU thresholds 0.50, 0.55, ..., 0.95 used for AP@[.5:.95].
pub fn ap_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

/// True/false positive and false negative counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl MatchCounts {
    pub fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        Self { tp, fp, fn_ }
    }

    pub fn ground_truth(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn spotted(&self) -> usize {
        self.tp + self.fp
    }
}

impl std::ops::Add for MatchCounts {
    type Output = MatchCounts;

    fn add(self, o: MatchCounts) -> MatchCounts {
        MatchCounts { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_ }
    }
}

impl std::ops::AddAssign for MatchCounts {
    fn add_assign(&mut self, o: MatchCounts) {
        *self = *self + o;
    }
}

impl std::iter::Sum for MatchCounts {
    fn sum<I: Iterator<Item = MatchCounts>>(iter: I) -> Self {
        iter.fold(MatchCounts::default(), |a, b| a + b)
    }
}

/// `(precision, recall, F1)`, each 0 when its denominator is 0.
pub fn precision_recall_f1(c: MatchCounts) -> (f64, f64, f64) {
    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    let p = ratio(c.tp, c.tp + c.fp);
    let r = ratio(c.tp, c.tp + c.fn_);
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f1)
}

/// A spotted interval tagged with the video (`group`) it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub group: usize,
    pub interval: FrameInterval,
    pub peak_frame: usize,
    pub confidence: f64,
}

/// An annotated interval tagged with its video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub group: usize,
    pub interval: FrameInterval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    pub counts: MatchCounts,
    /// TP flag for each prediction, in input order.
    pub true_positive: Vec<bool>,
    /// Input indices in ranking order.
    pub ranking: Vec<usize>,
}

/// Ranking order: confidence descending, then earlier peak, then group.
pub fn rank_predictions(predictions: &[Prediction]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&predictions[a], &predictions[b]);
        pb.confidence
            .total_cmp(&pa.confidence)
            .then(pa.peak_frame.cmp(&pb.peak_frame))
            .then(pa.group.cmp(&pb.group))
            .then(a.cmp(&b))
    });
    order
}

/// Greedy one-to-one matching in ranking order. Each prediction takes the
/// unmatched ground truth of its own group with the highest IoU (lowest index
/// on ties) and counts as a TP when that IoU reaches `iou_threshold`.
pub fn match_intervals(predictions: &[Prediction], ground_truth: &[GroundTruth], iou_threshold: f64) -> MatchOutcome {
    let ranking = rank_predictions(predictions);
    let mut taken = vec![false; ground_truth.len()];
    let mut true_positive = vec![false; predictions.len()];
    let mut counts = MatchCounts::default();
    for &pi in &ranking {
        let pred = &predictions[pi];
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in ground_truth.iter().enumerate() {
            if taken[gi] || gt.group != pred.group {
                continue;
            }
            let iou = interval_iou(&pred.interval, &gt.interval);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        match best {
            Some((gi, iou)) if iou >= iou_threshold => {
                taken[gi] = true;
                true_positive[pi] = true;
                counts.tp += 1;
            }
            _ => counts.fp += 1,
        }
    }
    counts.fn_ = taken.iter().filter(|t| !**t).count();
    MatchOutcome { counts, true_positive, ranking }
}

/// 101-point interpolated average precision at one IoU threshold.
///
/// Predictions from all groups are ranked together; matching stays within
/// each group. With no ground truth the AP is 0.
pub fn average_precision(predictions: &[Prediction], ground_truth: &[GroundTruth], iou_threshold: f64) -> f64 {
    if ground_truth.is_empty() || predictions.is_empty() {
        return 0.0;
    }
    let outcome = match_intervals(predictions, ground_truth, iou_threshold);
    let n_gt = ground_truth.len() as f64;
    let mut tp = 0usize;
    let mut precision = Vec::with_capacity(predictions.len());
    let mut recall = Vec::with_capacity(predictions.len());
    for (rank, &pi) in outcome.ranking.iter().enumerate() {
        if outcome.true_positive[pi] {
            tp += 1;
        }
        precision.push(tp as f64 / (rank + 1) as f64);
        recall.push(tp as f64 / n_gt);
    }
    // Precision envelope: best precision at this or any higher recall.
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    for r in 0..=100 {
        let t = r as f64 / 100.0;
        let idx = recall.partition_point(|&rc| rc < t);
        if idx < recall.len() {
            sum += precision[idx];
        }
    }
    sum / 101.0
}

/// Mean AP over the thresholds of [`ap_thresholds`].
pub fn ap_range(predictions: &[Prediction], ground_truth: &[GroundTruth]) -> f64 {
    let t = ap_thresholds();
    t.iter().map(|&th| average_precision(predictions, ground_truth, th)).sum::<f64>() / t.len() as f64
}
