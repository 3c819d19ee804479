//! Spotting macro- and micro-expression intervals in long face videos.
//!
//! The pipeline runs TV-L1 optical flow between frames `k` apart, reduces each
//! flow field to a 42x42x3 (u, v, strain) input built from three facial
//! regions, regresses a per-frame confidence with a shallow three-stream
//! network trained on sliding-window pseudo-labels, and turns the smoothed
//! confidence series into `[peak - k, peak + k]` intervals. The [`eval`]
//! module scores the result with interval F1 and AP@[.5:.95] under
//! leave-one-subject-out cross-validation.

pub mod dataio;
pub mod error;
pub mod eval;
pub mod flow;
pub mod imgproc;
pub mod preprocess;
pub mod pseudolabel;
pub mod softnet;
pub mod spotting;

pub use dataio::{Dataset, SyntheticConfig};
pub use error::{Error, Result};
pub use eval::{EvalReport, MatchCounts, ProtocolConfig};
pub use flow::{FlowField, GrayFrame, StrainField, TvL1Params};
pub use preprocess::{LandmarkSet, MotionInput};
pub use pseudolabel::{ExpressionClass, FrameInterval, LabelFunction};
pub use softnet::{SoftNetModel, TrainConfig};
pub use spotting::{ScoreSeries, SpotResult};
