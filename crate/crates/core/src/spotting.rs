//! Turning per-frame confidence scores into spotted intervals: windowed-mean
//! smoothing, a mean/max-relative threshold, peak picking with a minimum
//! separation, and fixed-width interval construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pseudolabel::{ExpressionClass, FrameInterval};

/// Confidence scores for consecutive frames of one video.
///
/// `scores[i]` belongs to video frame `offset + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub scores: Vec<f64>,
    pub offset: usize,
    pub video_id: String,
    pub class: ExpressionClass,
    /// Length of the whole video, used to clamp spotted intervals.
    pub frame_count: usize,
}

impl ScoreSeries {
    pub fn new(
        scores: Vec<f64>,
        offset: usize,
        video_id: impl Into<String>,
        class: ExpressionClass,
        frame_count: usize,
    ) -> Result<Self> {
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("score series"));
        }
        Ok(Self { scores, offset, video_id: video_id.into(), class, frame_count })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One spotted interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotResult {
    pub peak_frame: usize,
    /// `[peak - k, peak + k]`, clamped to the video.
    pub interval: FrameInterval,
    /// Smoothed score at the peak.
    pub confidence: f64,
    pub threshold: f64,
    /// True when clamping shortened the interval.
    pub clamped: bool,
}

/// Everything the spotting stage computed for one series.
#[derive(Debug, Clone, PartialEq)]
pub struct SpotOutcome {
    pub smoothed: ScoreSeries,
    pub threshold: f64,
    pub spots: Vec<SpotResult>,
}

/// Mean over the `2k + 1` raw scores centred on each position that has a full
/// window. The result is shorter by `2k` and its offset advances by `k`.
pub fn smooth_scores(raw: &ScoreSeries, k: usize) -> Result<ScoreSeries> {
    let width = 2 * k + 1;
    if raw.len() < width {
        return Err(Error::SequenceTooShort { length: raw.len(), required: width });
    }
    let scores = raw.scores.windows(width).map(|w| w.iter().sum::<f64>() / width as f64).collect();
    Ok(ScoreSeries {
        scores,
        offset: raw.offset + k,
        video_id: raw.video_id.clone(),
        class: raw.class,
        frame_count: raw.frame_count,
    })
}

/// `T = mean + p * (max - mean)` over the whole series.
pub fn compute_threshold(series: &ScoreSeries, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("p must lie in [0, 1], got {p}")));
    }
    if series.is_empty() {
        return Err(Error::SequenceTooShort { length: 0, required: 1 });
    }
    let (mean, max) = (series.mean(), series.max());
    // mean + 1·(max − mean) can round away from max.
    Ok(if p == 1.0 { max } else { mean + p * (max - mean) })
}

/// Local maxima at or above `threshold`, at least `k` frames apart.
///
/// A candidate must be strictly greater than both neighbours; a flat-topped
/// maximum is represented by its first index. Candidates are accepted greedily
/// from the highest value down (earlier frame first on ties) and any candidate
/// closer than `k` to an accepted peak is dropped. Returns video frame indices
/// in ascending order.
pub fn detect_peaks(series: &ScoreSeries, threshold: f64, k: usize) -> Vec<usize> {
    let x = &series.scores;
    let n = x.len();
    let mut candidates = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i] > x[i - 1] {
            let mut end = i;
            while end + 1 < n && x[end + 1] == x[i] {
                end += 1;
            }
            if end + 1 < n && x[end + 1] < x[i] && x[i] >= threshold {
                candidates.push(i);
            }
            i = end + 1;
        } else {
            i += 1;
        }
    }
    candidates.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));

    let mut accepted: Vec<usize> = Vec::new();
    for c in candidates {
        if accepted.iter().all(|&a| a.abs_diff(c) >= k) {
            accepted.push(c);
        }
    }
    accepted.sort_unstable();
    accepted.into_iter().map(|i| series.offset + i).collect()
}

/// Smooth, threshold, pick peaks and widen each peak to `[peak - k, peak + k]`.
pub fn spot(raw: &ScoreSeries, k: usize, p: f64) -> Result<Vec<SpotResult>> {
    spot_detailed(raw, k, p).map(|o| o.spots)
}

/// [`spot`] that also returns the smoothed series and the threshold.
pub fn spot_detailed(raw: &ScoreSeries, k: usize, p: f64) -> Result<SpotOutcome> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let smoothed = smooth_scores(raw, k)?;
    let threshold = compute_threshold(&smoothed, p)?;
    let last = raw.frame_count.max(1) - 1;
    let spots = detect_peaks(&smoothed, threshold, k)
        .into_iter()
        .map(|peak| {
            let lo = peak.saturating_sub(k);
            let hi = (peak + k).min(last);
            let clamped = peak < k || peak + k > last;
            SpotResult {
                peak_frame: peak,
                interval: FrameInterval::new(lo, hi).expect("lo <= peak <= hi"),
                confidence: smoothed.scores[peak - smoothed.offset],
                threshold,
                clamped,
            }
        })
        .collect();
    Ok(SpotOutcome { smoothed, threshold, spots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(scores: Vec<f64>) -> ScoreSeries {
        let n = scores.len();
        ScoreSeries::new(scores, 0, "v", ExpressionClass::Micro, n).unwrap()
    }

    #[test]
    fn smoothing_examples() {
        let s = smooth_scores(&series(vec![0., 0., 0., 1., 0., 0., 0.]), 1).unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(s.scores, vec![0.0, third, third, third, 0.0]);
        assert_eq!(s.offset, 1);
        let c = smooth_scores(&series(vec![0.4; 20]), 3).unwrap();
        assert_eq!(c.len(), 14);
        assert!(c.scores.iter().all(|v| (v - 0.4).abs() < 1e-15));
        assert!(smooth_scores(&series(vec![1.0; 4]), 2).is_err());
    }

    #[test]
    fn threshold_examples() {
        // mean 0.2, max 1.0
        let s = series(vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!((compute_threshold(&s, 0.55).unwrap() - 0.64).abs() < 1e-12);
        assert_eq!(compute_threshold(&s, 0.0).unwrap(), s.mean());
        assert_eq!(compute_threshold(&s, 1.0).unwrap(), 1.0);
        assert!(compute_threshold(&s, 1.5).is_err());
        assert!(compute_threshold(&series(vec![]), 0.5).is_err());
    }

    #[test]
    fn peak_examples() {
        assert!(detect_peaks(&series(vec![0.1, 0.2, 0.1]), 0.5, 1).is_empty());
        assert_eq!(detect_peaks(&series(vec![0., 1., 0., 1., 0.]), 0.5, 1), vec![1, 3]);
        assert_eq!(detect_peaks(&series(vec![0., 1., 0., 1., 0.]), 0.5, 3), vec![1]);
        // Plateau reports its first index; the edges are never peaks.
        assert_eq!(detect_peaks(&series(vec![0., 2., 2., 2., 0., 3.]), 0.0, 1), vec![1]);
    }

    #[test]
    fn flat_series_has_no_spots() {
        assert!(spot(&series(vec![0.3; 60]), 6, 0.55).unwrap().is_empty());
    }

    #[test]
    fn triangular_bump_gives_centred_interval() {
        let raw: Vec<f64> = (0..100).map(|i| (10.0 - (i as f64 - 50.0).abs()).max(0.0)).collect();
        let spots = spot(&series(raw), 6, 0.55).unwrap();
        assert_eq!(spots.len(), 1);
        assert_eq!(spots[0].peak_frame, 50);
        assert_eq!(spots[0].interval, FrameInterval::new(44, 56).unwrap());
        assert!(!spots[0].clamped);
        assert!(spots[0].confidence >= spots[0].threshold);
    }

    #[test]
    fn intervals_are_clamped_at_the_video_edges() {
        let raw: Vec<f64> = (0..40).map(|i| (10.0 - (i as f64 - 8.0).abs()).max(0.0)).collect();
        let spots = spot(&series(raw), 6, 0.5).unwrap();
        assert_eq!(spots.len(), 1);
        assert_eq!(spots[0].peak_frame, 8);
        assert_eq!(spots[0].interval, FrameInterval::new(2, 14).unwrap());
        assert!(!spots[0].clamped);
        // A series that claims a shorter video than it covers gets clipped.
        let s = ScoreSeries::new(vec![0., 0., 0., 5., 0., 0., 0.], 0, "v", ExpressionClass::Micro, 3).unwrap();
        let spots = spot(&s, 1, 0.5).unwrap();
        assert_eq!(spots[0].peak_frame, 2);
        assert_eq!(spots[0].interval, FrameInterval::new(1, 2).unwrap());
        assert!(spots[0].clamped);
    }

    proptest! {
        #[test]
        fn threshold_and_spot_count_are_monotone_in_p(
            raw in proptest::collection::vec(0.0f64..1.0, 30..120),
            k in 1usize..6,
        ) {
            let s = series(raw);
            let mut last_t = f64::NEG_INFINITY;
            let mut last_n = usize::MAX;
            for i in 0..=20 {
                let p = i as f64 / 20.0;
                let smoothed = smooth_scores(&s, k).unwrap();
                let t = compute_threshold(&smoothed, p).unwrap();
                prop_assert!(t >= last_t);
                last_t = t;
                let n = spot(&s, k, p).unwrap().len();
                prop_assert!(n <= last_n);
                last_n = n;
            }
        }

        #[test]
        fn smoothing_stays_within_the_raw_range(
            raw in proptest::collection::vec(-5.0f64..5.0, 13..80),
            k in 0usize..6,
        ) {
            let s = series(raw);
            let m = smooth_scores(&s, k).unwrap();
            let lo = s.scores.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(m.scores.iter().all(|&v| v >= lo - 1e-12 && v <= s.max() + 1e-12));
        }
    }
}
