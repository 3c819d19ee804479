use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::flow::TvL1Params;
use crate::preprocess::{extract_video_features, MotionInput};

use super::cache::{read_feature_cache, write_feature_cache};
use super::dataset::{load_frames, Dataset, VideoRecord};

/// Decodes a video and extracts the motion input of every pair `(i, i + k)`.
pub fn video_features(
    dataset: &Dataset,
    video: &VideoRecord,
    k: usize,
    params: &TvL1Params,
) -> Result<Vec<MotionInput>> {
    let frames = load_frames(video)?;
    extract_video_features(&frames, dataset.landmarks_for(&video.video_id)?, k, params)
}

/// Cache files are keyed by video id and `k` only.
pub fn feature_cache_path(dir: &Path, video_id: &str, k: usize) -> PathBuf {
    dir.join(format!("{video_id}.k{k}.sfmc"))
}

/// Reads features from `dir` when a cache with the right `k` and length
/// exists; otherwise extracts them and writes the cache.
pub fn cached_video_features(
    dataset: &Dataset,
    video: &VideoRecord,
    k: usize,
    params: &TvL1Params,
    dir: &Path,
) -> Result<Vec<MotionInput>> {
    let path = feature_cache_path(dir, &video.video_id, k);
    if path.exists() {
        let cache = read_feature_cache(&path)?;
        if cache.k == k && cache.features.len() + k == video.frame_count() {
            return Ok(cache.features);
        }
    }
    let features = video_features(dataset, video, k, params)?;
    std::fs::create_dir_all(dir)?;
    write_feature_cache(&path, k, &features)?;
    Ok(features)
}
