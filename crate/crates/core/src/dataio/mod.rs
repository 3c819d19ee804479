//! Dataset loading, feature caching, synthetic data and result export.

mod cache;
mod dataset;
mod export;
mod features;
mod synth;

pub use cache::{
    cache_from_bytes, cache_to_bytes, read_feature_cache, write_feature_cache, FeatureCache, CACHE_HEADER_LEN,
    CACHE_MAGIC, CACHE_VERSION,
};
pub use dataset::{
    load_dataset, load_frames, read_frame, read_landmarks, write_annotations, write_frame, write_landmarks,
    write_videos, AnnotationRecord, Dataset, VideoEntry, VideoRecord, ANNOTATIONS_FILE, FRAMES_DIR, LANDMARKS_DIR,
    VIDEOS_FILE,
};
pub use export::{
    export_report, export_timeline, read_report, read_timeline_csv, report_to_json, timeline_rows, timeline_svg,
    write_timeline_csv, Timeline, TimelineRow,
};
pub use features::{cached_video_features, feature_cache_path, video_features};
pub use synth::{
    generate_synthetic, plan_annotations, plan_dataset, render_video, synthetic_landmarks, SyntheticConfig,
    SyntheticEvent, VideoPlan, FACE_OFFSET, FRAME_SIZE, SYNTHETIC_MARKER,
};
