//! On-disk dataset layout:
//!
//! ```text
//! root/
//!   videos.csv                  video_id,subject_id,fps
//!   annotations.csv             subject_id,video_id,type,onset,offset,apex
//!   frames/<video_id>/00001.png (or .pgm), one 8-bit grayscale image per frame
//!   landmarks/<video_id>.csv    x,y header then 68 rows for the reference frame
//! ```
//!
//! Frame indices in `annotations.csv` are 1-based; everything in memory is 0-based.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::GrayFrame;
use crate::preprocess::{LandmarkSet, LANDMARK_COUNT};
use crate::pseudolabel::{ExpressionClass, FrameInterval};

pub const VIDEOS_FILE: &str = "videos.csv";
pub const ANNOTATIONS_FILE: &str = "annotations.csv";
pub const FRAMES_DIR: &str = "frames";
pub const LANDMARKS_DIR: &str = "landmarks";

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub video_id: String,
    pub subject_id: String,
    pub frame_dir: PathBuf,
    /// Frame files in temporal (lexicographic) order.
    pub frame_paths: Vec<PathBuf>,
    pub fps: f64,
    pub landmark_path: PathBuf,
    pub width: usize,
    pub height: usize,
}

impl VideoRecord {
    pub fn frame_count(&self) -> usize {
        self.frame_paths.len()
    }
}

/// One annotated expression, converted to 0-based frame indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub video_id: String,
    pub subject_id: String,
    pub class: ExpressionClass,
    pub interval: FrameInterval,
    pub apex: Option<usize>,
}

/// A validated, cross-referenced dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    /// Sorted by video id.
    pub videos: Vec<VideoRecord>,
    pub annotations: Vec<AnnotationRecord>,
    pub landmarks: BTreeMap<String, LandmarkSet>,
}

impl Dataset {
    pub fn video(&self, video_id: &str) -> Option<&VideoRecord> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }

    /// Annotated intervals of one class in one video, sorted.
    pub fn intervals(&self, video_id: &str, class: ExpressionClass) -> Vec<FrameInterval> {
        let mut out: Vec<FrameInterval> = self
            .annotations
            .iter()
            .filter(|a| a.video_id == video_id && a.class == class)
            .map(|a| a.interval)
            .collect();
        out.sort();
        out
    }

    /// Distinct subject ids, sorted.
    pub fn subjects(&self) -> Vec<String> {
        self.videos.iter().map(|v| v.subject_id.clone()).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn landmarks_for(&self, video_id: &str) -> Result<&LandmarkSet> {
        self.landmarks.get(video_id).ok_or_else(|| Error::Dataset(format!("no landmarks for video '{video_id}'")))
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct VideoRow {
    video_id: String,
    subject_id: String,
    fps: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct AnnotationRow {
    subject_id: String,
    video_id: String,
    #[serde(rename = "type")]
    class: String,
    onset: usize,
    offset: usize,
    apex: Option<usize>,
}

#[derive(Debug, Deserialize, Serialize)]
struct PointRow {
    x: f64,
    y: f64,
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingFile(path.to_path_buf()))
    }
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    parse_error(path, line, e.to_string())
}

/// Deserializes every row of a headed CSV file, keeping its line number.
fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<(u64, T)>> {
    require(path)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record.deserialize(Some(&headers)).map_err(|e| parse_error(path, line, e.to_string()))?;
        rows.push((line, row));
    }
    Ok(rows)
}

/// Reads a 68-point landmark file; points must lie inside a `width` x `height` frame.
pub fn read_landmarks(path: &Path, width: usize, height: usize) -> Result<LandmarkSet> {
    let rows: Vec<(u64, PointRow)> = read_rows(path)?;
    if rows.len() != LANDMARK_COUNT {
        return Err(parse_error(path, 0, format!("{} landmark rows, expected {LANDMARK_COUNT}", rows.len())));
    }
    LandmarkSet::new(rows.into_iter().map(|(_, p)| (p.x, p.y)).collect(), width, height)
        .map_err(|e| parse_error(path, 0, e.to_string()))
}

pub fn write_landmarks(path: &Path, points: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for &(x, y) in points {
        w.serialize(PointRow { x, y }).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Row of `videos.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoEntry {
    pub video_id: String,
    pub subject_id: String,
    pub fps: f64,
}

pub fn write_videos(path: &Path, videos: &[VideoEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for v in videos {
        w.serialize(VideoRow { video_id: v.video_id.clone(), subject_id: v.subject_id.clone(), fps: v.fps })
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes annotations with 1-based frame indices.
pub fn write_annotations(path: &Path, annotations: &[AnnotationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    if annotations.is_empty() {
        w.write_record(["subject_id", "video_id", "type", "onset", "offset", "apex"])
            .map_err(|e| csv_error(path, e))?;
    }
    for a in annotations {
        w.serialize(AnnotationRow {
            subject_id: a.subject_id.clone(),
            video_id: a.video_id.clone(),
            class: a.class.as_str().to_string(),
            onset: a.interval.onset() + 1,
            offset: a.interval.offset() + 1,
            apex: a.apex.map(|x| x + 1),
        })
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

fn is_frame_file(path: &Path) -> bool {
    let ext_ok = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm"));
    let stem_ok = path
        .file_stem()
        .and_then(|s| s.to_str())
        .is_some_and(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()));
    ext_ok && stem_ok
}

fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    require(dir)?;
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && is_frame_file(&path) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

fn image_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image { path: path.to_path_buf(), message: e.to_string() }
}

/// Decodes one frame as 8-bit grayscale, scaled to [0, 1].
pub fn read_frame(path: &Path) -> Result<GrayFrame> {
    let img = image::open(path).map_err(|e| image_error(path, e))?.into_luma8();
    let (w, h) = img.dimensions();
    GrayFrame::from_u8(w as usize, h as usize, img.as_raw())
}

/// Encodes a frame as 8-bit grayscale; the format follows the extension.
pub fn write_frame(path: &Path, frame: &GrayFrame) -> Result<()> {
    let img = image::GrayImage::from_raw(frame.width() as u32, frame.height() as u32, frame.to_u8())
        .expect("buffer matches dimensions");
    img.save(path).map_err(|e| image_error(path, e))
}

/// Decodes all frames of a video in parallel, checking that sizes agree.
pub fn load_frames(video: &VideoRecord) -> Result<Vec<GrayFrame>> {
    let frames: Vec<GrayFrame> = video.frame_paths.par_iter().map(|p| read_frame(p)).collect::<Result<_>>()?;
    for (f, p) in frames.iter().zip(&video.frame_paths) {
        if f.width() != video.width || f.height() != video.height {
            return Err(image_error(
                p,
                format!("{}x{} frame, expected {}x{}", f.width(), f.height(), video.width, video.height),
            ));
        }
    }
    Ok(frames)
}

fn load_video(root: &Path, line: u64, row: VideoRow, videos_path: &Path) -> Result<VideoRecord> {
    if row.video_id.is_empty() || row.subject_id.is_empty() {
        return Err(parse_error(videos_path, line, "empty video or subject id"));
    }
    if !(row.fps.is_finite() && row.fps > 0.0) {
        return Err(parse_error(videos_path, line, format!("fps must be positive, got {}", row.fps)));
    }
    let frame_dir = root.join(FRAMES_DIR).join(&row.video_id);
    let frame_paths = list_frames(&frame_dir)?;
    if frame_paths.len() < 2 {
        return Err(Error::Dataset(format!(
            "video '{}' has {} frames, need at least 2",
            row.video_id,
            frame_paths.len()
        )));
    }
    let (w, h) = image::image_dimensions(&frame_paths[0]).map_err(|e| image_error(&frame_paths[0], e))?;
    Ok(VideoRecord {
        landmark_path: root.join(LANDMARKS_DIR).join(format!("{}.csv", row.video_id)),
        video_id: row.video_id,
        subject_id: row.subject_id,
        frame_dir,
        frame_paths,
        fps: row.fps,
        width: w as usize,
        height: h as usize,
    })
}

fn check_annotation(
    path: &Path,
    line: u64,
    row: AnnotationRow,
    videos: &BTreeMap<String, &VideoRecord>,
) -> Result<AnnotationRecord> {
    let err = |m: String| parse_error(path, line, m);
    let class: ExpressionClass = row.class.parse().map_err(|e: Error| err(e.to_string()))?;
    let video = videos.get(&row.video_id).ok_or_else(|| err(format!("unknown video '{}'", row.video_id)))?;
    if video.subject_id != row.subject_id {
        return Err(err(format!(
            "subject '{}' does not match video '{}' (subject '{}')",
            row.subject_id, row.video_id, video.subject_id
        )));
    }
    if row.onset == 0 {
        return Err(err("frame indices are 1-based; onset 0 is invalid".into()));
    }
    if row.onset > row.offset {
        return Err(err(format!("onset {} is after offset {}", row.onset, row.offset)));
    }
    if let Some(apex) = row.apex {
        if apex < row.onset || apex > row.offset {
            return Err(err(format!("apex {apex} lies outside [{}, {}]", row.onset, row.offset)));
        }
    }
    if row.offset > video.frame_count() {
        return Err(err(format!(
            "offset {} is beyond the {} frames of video '{}'",
            row.offset,
            video.frame_count(),
            row.video_id
        )));
    }
    Ok(AnnotationRecord {
        video_id: row.video_id,
        subject_id: row.subject_id,
        class,
        interval: FrameInterval::new(row.onset - 1, row.offset - 1)?,
        apex: row.apex.map(|a| a - 1),
    })
}

/// Loads and validates a dataset rooted at `root`.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    require(root)?;
    let videos_path = root.join(VIDEOS_FILE);
    let video_rows: Vec<(u64, VideoRow)> = read_rows(&videos_path)?;
    let mut seen = BTreeSet::new();
    for (line, row) in &video_rows {
        if !seen.insert(row.video_id.clone()) {
            return Err(parse_error(&videos_path, *line, format!("duplicate video '{}'", row.video_id)));
        }
    }
    let mut videos: Vec<VideoRecord> = video_rows
        .into_par_iter()
        .map(|(line, row)| load_video(root, line, row, &videos_path))
        .collect::<Result<_>>()?;
    videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));

    let landmarks = videos
        .par_iter()
        .map(|v| Ok((v.video_id.clone(), read_landmarks(&v.landmark_path, v.width, v.height)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;

    let annotations_path = root.join(ANNOTATIONS_FILE);
    let by_id: BTreeMap<String, &VideoRecord> = videos.iter().map(|v| (v.video_id.clone(), v)).collect();
    let annotations = read_rows::<AnnotationRow>(&annotations_path)?
        .into_iter()
        .map(|(line, row)| check_annotation(&annotations_path, line, row, &by_id))
        .collect::<Result<Vec<_>>>()?;

    Ok(Dataset { root: root.to_path_buf(), videos, annotations, landmarks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::canonical_landmarks;

    fn write_video(root: &Path, id: &str, frames: usize) {
        let dir = root.join(FRAMES_DIR).join(id);
        std::fs::create_dir_all(&dir).unwrap();
        for i in 0..frames {
            let f = GrayFrame::constant(128, 128, 0.5).unwrap();
            write_frame(&dir.join(format!("{:05}.png", i + 1)), &f).unwrap();
        }
        std::fs::create_dir_all(root.join(LANDMARKS_DIR)).unwrap();
        write_landmarks(&root.join(LANDMARKS_DIR).join(format!("{id}.csv")), &canonical_landmarks(0.0)).unwrap();
    }

    fn fixture(annotations: &str) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        write_video(dir.path(), "v1", 12);
        write_video(dir.path(), "v2", 4);
        std::fs::write(dir.path().join(VIDEOS_FILE), "video_id,subject_id,fps\nv1,s1,30\nv2,s2,30\n").unwrap();
        std::fs::write(dir.path().join(ANNOTATIONS_FILE), annotations).unwrap();
        dir
    }

    const HEADER: &str = "subject_id,video_id,type,onset,offset,apex\n";

    #[test]
    fn empty_annotations_load() {
        let dir = fixture(HEADER);
        let ds = load_dataset(dir.path()).unwrap();
        assert!(ds.annotations.is_empty());
        assert_eq!(ds.videos.len(), 2);
        assert_eq!(ds.videos[0].frame_count(), 12);
        assert_eq!(ds.subjects(), vec!["s1".to_string(), "s2".to_string()]);
        assert_eq!(load_frames(&ds.videos[1]).unwrap().len(), 4);
    }

    #[test]
    fn indices_become_zero_based() {
        let dir = fixture(&format!("{HEADER}s1,v1,micro,1,5,3\ns1,v1,macro,4,12,\n"));
        let ds = load_dataset(dir.path()).unwrap();
        let a = &ds.annotations[0];
        assert_eq!((a.interval.onset(), a.interval.offset(), a.apex), (0, 4, Some(2)));
        assert_eq!(ds.annotations[1].apex, None);
        assert_eq!(ds.intervals("v1", ExpressionClass::Macro), vec![FrameInterval::new(3, 11).unwrap()]);
    }

    #[test]
    fn invalid_rows_report_their_line() {
        for (body, needle) in [
            ("s1,v1,micro,6,5,\n", "onset 6 is after offset 5"),
            ("s1,v9,micro,1,5,\n", "unknown video"),
            ("s2,v1,micro,1,5,\n", "does not match"),
            ("s1,v1,micro,1,13,\n", "beyond the 12 frames"),
            ("s1,v1,blink,1,5,\n", "unknown expression class"),
            ("s1,v1,micro,0,5,\n", "1-based"),
            ("s1,v1,micro,2,5,9\n", "apex 9"),
        ] {
            let dir = fixture(&format!("{HEADER}s1,v1,macro,1,2,\n{body}"));
            let err = load_dataset(dir.path()).unwrap_err();
            match &err {
                Error::Parse { line, message, .. } => {
                    assert_eq!(*line, 3, "{body}: {err}");
                    assert!(message.contains(needle), "{body}: {message}");
                }
                other => panic!("{body}: unexpected {other}"),
            }
        }
    }

    #[test]
    fn malformed_number_is_a_parse_error() {
        let dir = fixture(&format!("{HEADER}s1,v1,micro,x,5,\n"));
        assert!(matches!(load_dataset(dir.path()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn missing_files_are_reported() {
        let dir = fixture(HEADER);
        std::fs::remove_file(dir.path().join(LANDMARKS_DIR).join("v2.csv")).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::MissingFile(p)) if p.ends_with("v2.csv")));
        let dir = fixture(HEADER);
        std::fs::remove_file(dir.path().join(ANNOTATIONS_FILE)).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::MissingFile(_))));
        assert!(matches!(load_dataset(&dir.path().join("nope")), Err(Error::MissingFile(_))));
    }

    #[test]
    fn annotation_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let recs = vec![AnnotationRecord {
            video_id: "v".into(),
            subject_id: "s".into(),
            class: ExpressionClass::Micro,
            interval: FrameInterval::new(0, 9).unwrap(),
            apex: Some(4),
        }];
        write_annotations(&path, &recs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "subject_id,video_id,type,onset,offset,apex\ns,v,micro,1,10,5\n");
        write_annotations(&path, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), HEADER);
    }
}
