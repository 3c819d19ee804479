//! Interval matching, precision/recall/F1, AP@[.5:.95], leave-one-subject-out
//! folds, the evaluation protocol and the threshold sweep.

mod folds;
mod metrics;
mod protocol;

pub use folds::{loso_folds, Fold};
pub use metrics::{
    ap_range, ap_thresholds, average_precision, match_intervals, precision_recall_f1, rank_predictions, GroundTruth,
    MatchCounts, MatchOutcome, Prediction,
};
pub use protocol::{
    default_p_grid, evaluate_scores, run_protocol, score_dataset, sweep_csv, sweep_p, CachedScores, ClassReport,
    ClassScores, ClassSettings, EvalReport, FeatureSource, FoldReport, FoldTraining, Metrics, ProtocolConfig,
    ReportInterval, ReportSpot, SweepRow, VideoReport, VideoScores,
};
