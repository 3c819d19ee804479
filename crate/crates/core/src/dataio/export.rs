//! Timeline (CSV + SVG) and report (JSON) export. Frame numbers in exported
//! files are 1-based.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::pseudolabel::FrameInterval;
use crate::spotting::{ScoreSeries, SpotResult};

/// One row of a timeline CSV. Frames without a score have empty cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineRow {
    pub frame: usize,
    pub raw_score: Option<f64>,
    pub smoothed_score: Option<f64>,
    pub threshold: f64,
    pub in_ground_truth: u8,
    pub in_prediction: u8,
}

/// Everything plotted for one video and class.
#[derive(Debug, Clone, Copy)]
pub struct Timeline<'a> {
    pub raw: &'a ScoreSeries,
    pub smoothed: &'a ScoreSeries,
    pub threshold: f64,
    pub ground_truth: &'a [FrameInterval],
    pub spots: &'a [SpotResult],
}

fn score_at(series: &ScoreSeries, frame: usize) -> Option<f64> {
    frame.checked_sub(series.offset).and_then(|i| series.scores.get(i)).copied()
}

/// One row per video frame.
pub fn timeline_rows(t: &Timeline<'_>) -> Result<Vec<TimelineRow>> {
    let n = t.raw.frame_count;
    if t.smoothed.frame_count != n {
        return Err(Error::ShapeMismatch("raw and smoothed series describe different videos".into()));
    }
    if t.raw.offset + t.raw.len() > n || t.smoothed.offset + t.smoothed.len() > n {
        return Err(Error::ShapeMismatch("score series extends past the video".into()));
    }
    Ok((0..n)
        .map(|f| TimelineRow {
            frame: f + 1,
            raw_score: score_at(t.raw, f),
            smoothed_score: score_at(t.smoothed, f),
            threshold: t.threshold,
            in_ground_truth: t.ground_truth.iter().any(|g| g.contains(f)) as u8,
            in_prediction: t.spots.iter().any(|s| s.interval.contains(f)) as u8,
        })
        .collect())
}

pub fn write_timeline_csv(path: &Path, rows: &[TimelineRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_timeline_csv(path: &Path) -> Result<Vec<TimelineRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    r.deserialize()
        .map(|row| {
            row.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })
        })
        .collect()
}

const SVG_W: f64 = 900.0;
const SVG_H: f64 = 320.0;
const MARGIN: f64 = 40.0;
const BAR_H: f64 = 10.0;

/// Line plot of both series with the threshold line and, below the axis,
/// one bar row for ground truth and one for spotted intervals.
pub fn timeline_svg(rows: &[TimelineRow], title: &str) -> String {
    let n = rows.len().max(2);
    let values =
        rows.iter().flat_map(|r| [r.raw_score, r.smoothed_score]).flatten().chain(rows.first().map(|r| r.threshold));
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        hi = lo + 1.0;
    }
    let plot_h = SVG_H - 2.0 * MARGIN - 3.0 * BAR_H;
    let x = |frame: usize| MARGIN + (frame - 1) as f64 / (n - 1) as f64 * (SVG_W - 2.0 * MARGIN);
    let y = |v: f64| MARGIN + (hi - v) / (hi - lo) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ =
        writeln!(s, r#"<text x="{MARGIN}" y="24" font-family="sans-serif" font-size="14">{}</text>"#, escape(title));
    let axis_y = MARGIN + plot_h;
    let _ = writeln!(
        s,
        r##"<line x1="{MARGIN}" y1="{axis_y:.2}" x2="{:.2}" y2="{axis_y:.2}" stroke="#444"/>"##,
        SVG_W - MARGIN
    );
    for (pick, colour, width) in [(0usize, "#9ab", 1.0), (1, "#1f5fbf", 2.0)] {
        let mut path = String::new();
        let mut pen_down = false;
        for r in rows {
            match if pick == 0 { r.raw_score } else { r.smoothed_score } {
                Some(v) => {
                    let _ = write!(path, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, x(r.frame), y(v));
                    pen_down = true;
                }
                None => pen_down = false,
            }
        }
        if !path.is_empty() {
            let _ =
                writeln!(s, r#"<path d="{}" fill="none" stroke="{colour}" stroke-width="{width}"/>"#, path.trim_end());
        }
    }
    if let Some(r) = rows.first() {
        let ty = y(r.threshold);
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN}" y1="{ty:.2}" x2="{:.2}" y2="{ty:.2}" stroke="#d33" stroke-dasharray="6 4"/>"##,
            SVG_W - MARGIN
        );
    }
    let bars = |s: &mut String, flag: fn(&TimelineRow) -> bool, top: f64, colour: &str| {
        let mut start: Option<usize> = None;
        for (i, r) in rows.iter().enumerate() {
            let on = flag(r);
            if on && start.is_none() {
                start = Some(i);
            }
            let closes = start.is_some() && (!on || i + 1 == rows.len());
            if closes {
                let a = rows[start.take().expect("open bar")].frame;
                let b = if on { r.frame } else { rows[i - 1].frame };
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{top:.2}" width="{:.2}" height="{BAR_H}" fill="{colour}"/>"#,
                    x(a),
                    (x(b) - x(a)).max(1.0)
                );
            }
        }
    };
    bars(&mut s, |r| r.in_ground_truth == 1, axis_y + BAR_H * 0.5, "#2a2");
    bars(&mut s, |r| r.in_prediction == 1, axis_y + BAR_H * 2.0, "#e80");
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `<stem>.csv` and `<stem>.svg`; returns both paths.
pub fn export_timeline(t: &Timeline<'_>, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    let rows = timeline_rows(t)?;
    let csv_path = stem.with_extension("csv");
    let svg_path = stem.with_extension("svg");
    write_timeline_csv(&csv_path, &rows)?;
    let title = format!("{} ({}), threshold {:.4}", t.raw.video_id, t.raw.class, t.threshold);
    std::fs::write(&svg_path, timeline_svg(&rows, &title))?;
    Ok((csv_path, svg_path))
}

/// Pretty JSON with a fixed field order (the struct declaration order).
pub fn report_to_json(report: &EvalReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)? + "\n")
}

pub fn export_report(report: &EvalReport, path: &Path) -> Result<()> {
    std::fs::write(path, report_to_json(report)?)?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}
