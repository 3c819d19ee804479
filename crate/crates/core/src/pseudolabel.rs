//! Sliding-window pseudo-labels: every window position gets a training score
//! derived from its overlap with the annotated expression intervals.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Macro- or micro-expression. Each class has its own model and window length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpressionClass {
    Macro,
    Micro,
}

impl ExpressionClass {
    pub const ALL: [ExpressionClass; 2] = [ExpressionClass::Macro, ExpressionClass::Micro];

    pub fn as_str(self) -> &'static str {
        match self {
            ExpressionClass::Macro => "macro",
            ExpressionClass::Micro => "micro",
        }
    }
}

impl fmt::Display for ExpressionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExpressionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "macro" => Ok(ExpressionClass::Macro),
            "micro" => Ok(ExpressionClass::Micro),
            other => Err(Error::InvalidParameter(format!("unknown expression class '{other}'"))),
        }
    }
}

/// Inclusive, 0-based frame range `[onset, offset]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameInterval {
    onset: usize,
    offset: usize,
}

impl FrameInterval {
    pub fn new(onset: usize, offset: usize) -> Result<Self> {
        if onset > offset {
            return Err(Error::InvalidInterval { onset, offset });
        }
        Ok(Self { onset, offset })
    }

    pub fn onset(&self) -> usize {
        self.onset
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.offset - self.onset + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, frame: usize) -> bool {
        frame >= self.onset && frame <= self.offset
    }

    pub fn intersection_len(&self, other: &FrameInterval) -> usize {
        let lo = self.onset.max(other.onset);
        let hi = self.offset.min(other.offset);
        if lo > hi {
            0
        } else {
            hi - lo + 1
        }
    }
}

impl fmt::Display for FrameInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.onset, self.offset)
    }
}

/// Intersection over union of the two inclusive frame sets.
pub fn interval_iou(a: &FrameInterval, b: &FrameInterval) -> f64 {
    let inter = a.intersection_len(b);
    if inter == 0 {
        return 0.0;
    }
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Half-window `k = floor((N + 1) / 2)` for an average expression length `N`.
pub fn half_window(average_length: usize) -> Result<usize> {
    if average_length < 1 {
        return Err(Error::InvalidParameter("average expression length must be at least 1".into()));
    }
    Ok(average_length.div_ceil(2))
}

/// Maps a window/expression IoU to a training score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelFunction {
    /// `g(x) = x`
    Linear,
    /// Quantizes to {0, .25, .5, .75, 1}.
    Step4,
    /// Heaviside: 1 for any overlap.
    #[default]
    UnitStep,
}

impl LabelFunction {
    pub fn apply(self, iou: f64) -> f64 {
        match self {
            LabelFunction::Linear => iou,
            LabelFunction::Step4 => {
                if iou <= 0.0 {
                    0.0
                } else if iou < 0.25 {
                    0.25
                } else if iou < 0.5 {
                    0.5
                } else if iou < 0.75 {
                    0.75
                } else {
                    1.0
                }
            }
            LabelFunction::UnitStep => {
                if iou <= 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LabelFunction::Linear => "linear",
            LabelFunction::Step4 => "step",
            LabelFunction::UnitStep => "unit",
        }
    }
}

impl FromStr for LabelFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(LabelFunction::Linear),
            "step" | "step4" => Ok(LabelFunction::Step4),
            "unit" | "unit_step" => Ok(LabelFunction::UnitStep),
            other => Err(Error::InvalidParameter(format!("unknown label function '{other}'"))),
        }
    }
}

/// One pseudo-score per window position `j = 0 .. video_length - k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub scores: Vec<f64>,
    pub class: ExpressionClass,
}

/// Scores window `W_j = [j, j + k - 1]` by the best IoU against any annotated
/// interval, passed through `f`.
pub fn generate_labels(
    video_length: usize,
    k: usize,
    expressions: &[FrameInterval],
    f: LabelFunction,
    class: ExpressionClass,
) -> Result<LabelSet> {
    if k == 0 {
        return Err(Error::InvalidParameter("window length k must be at least 1".into()));
    }
    if video_length <= k {
        return Err(Error::SequenceTooShort { length: video_length, required: k + 1 });
    }
    for e in expressions {
        if e.offset() >= video_length {
            return Err(Error::IntervalOutOfRange { onset: e.onset(), offset: e.offset(), length: video_length });
        }
    }
    let scores = (0..video_length - k)
        .map(|j| {
            let window = FrameInterval { onset: j, offset: j + k - 1 };
            let best = expressions.iter().map(|e| interval_iou(&window, e)).fold(0.0, f64::max);
            f.apply(best)
        })
        .collect();
    Ok(LabelSet { scores, class })
}
