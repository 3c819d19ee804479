use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use softnet_core::dataio::{
    cached_video_features, export_report, export_timeline, feature_cache_path, generate_synthetic, load_dataset,
    video_features, write_feature_cache, Dataset, Timeline, VideoRecord,
};
use softnet_core::eval::{
    default_p_grid, evaluate_scores, score_dataset, sweep_csv, sweep_p, CachedScores, FeatureSource, ReportInterval,
    SweepRow,
};
use softnet_core::preprocess::MotionInput;
use softnet_core::pseudolabel::generate_labels;
use softnet_core::softnet::{
    build_training_set, predict_series, read_model, train, write_model, TrainReport, VideoSamples,
};
use softnet_core::spotting::spot_detailed;
use softnet_core::{ExpressionClass, Result};

use crate::config::RunConfig;

fn log(msg: impl AsRef<str>) {
    eprintln!("{}", msg.as_ref());
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    let out = cfg.out.clone().expect("validated");
    std::fs::create_dir_all(&out)?;
    write_json(&out.join("run_config.json"), cfg)?;
    Ok(out)
}

fn dataset(cfg: &RunConfig) -> Result<Dataset> {
    let t = Instant::now();
    let ds = load_dataset(cfg.dataset_root.as_ref().expect("validated"))?;
    log(format!(
        "loaded {} videos, {} annotations in {:.1}s",
        ds.videos.len(),
        ds.annotations.len(),
        t.elapsed().as_secs_f64()
    ));
    Ok(ds)
}

/// Extracts features, going through the cache directory when one is set.
struct Features<'a> {
    dataset: &'a Dataset,
    cfg: &'a RunConfig,
}

impl FeatureSource for Features<'_> {
    fn features(&self, video: &VideoRecord, k: usize) -> Result<Vec<MotionInput>> {
        let t = Instant::now();
        let f = match &self.cfg.cache {
            Some(dir) => cached_video_features(self.dataset, video, k, &self.cfg.protocol.tvl1, dir)?,
            None => video_features(self.dataset, video, k, &self.cfg.protocol.tvl1)?,
        };
        log(format!("features {} k={k}: {} inputs in {:.1}s", video.video_id, f.len(), t.elapsed().as_secs_f64()));
        Ok(f)
    }
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let root = cfg.out.clone().expect("validated");
    let t = Instant::now();
    let plans = generate_synthetic(&cfg.synthetic, &root)?;
    let events: usize = plans.iter().map(|p| p.events.len()).sum();
    log(format!(
        "wrote {} videos with {events} events to {} in {:.1}s",
        plans.len(),
        root.display(),
        t.elapsed().as_secs_f64()
    ));
    Ok(())
}

pub fn extract(cfg: &RunConfig) -> Result<()> {
    let ds = dataset(cfg)?;
    let out = prepare_out(cfg)?;
    let mut ks: Vec<usize> = cfg.classes().iter().map(|&c| cfg.protocol.settings(c).k).collect();
    ks.dedup();
    for v in &ds.videos {
        for &k in &ks {
            let t = Instant::now();
            let f = video_features(&ds, v, k, &cfg.protocol.tvl1)?;
            let path = feature_cache_path(&out, &v.video_id, k);
            write_feature_cache(&path, k, &f)?;
            log(format!("{}: {} inputs in {:.1}s", path.display(), f.len(), t.elapsed().as_secs_f64()));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    config: &'a RunConfig,
    class: ExpressionClass,
    videos: usize,
    samples: usize,
    report: TrainReport,
}

pub fn train_model(cfg: &RunConfig) -> Result<()> {
    let class = cfg.expression.expect("validated");
    let ds = dataset(cfg)?;
    let out = prepare_out(cfg)?;
    let settings = cfg.protocol.settings(class);
    let k = settings.k;
    let source = Features { dataset: &ds, cfg };
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for v in &ds.videos {
        features.push(source.features(v, k)?);
        labels.push(generate_labels(
            v.frame_count(),
            k,
            &ds.intervals(&v.video_id, class),
            settings.train.label_function,
            class,
        )?);
    }
    let inputs: Vec<VideoSamples<'_>> = ds
        .videos
        .iter()
        .zip(&features)
        .zip(&labels)
        .map(|((v, f), l)| VideoSamples { video_id: &v.video_id, features: f, labels: l })
        .collect();
    let train_cfg = softnet_core::TrainConfig { seed: cfg.protocol.seed, ..settings.train.clone() };
    let samples = build_training_set(&inputs, &train_cfg)?;
    let t = Instant::now();
    let (model, report) = train(&samples, class, &train_cfg)?;
    log(format!("trained on {} samples in {:.1}s", samples.len(), t.elapsed().as_secs_f64()));
    let path = out.join(format!("{class}.sftn"));
    write_model(&path, &model)?;
    write_json(
        &out.join(format!("{class}.train.json")),
        &TrainSummary { config: cfg, class, videos: ds.videos.len(), samples: samples.len(), report },
    )?;
    log(format!("wrote {}", path.display()));
    Ok(())
}

#[derive(Serialize)]
struct SpotEntry {
    video_id: String,
    threshold: Option<f64>,
    ground_truth: Vec<ReportInterval>,
    spots: Vec<SpotLine>,
}

#[derive(Serialize)]
struct SpotLine {
    onset: usize,
    offset: usize,
    peak: usize,
    confidence: f64,
}

#[derive(Serialize)]
struct SpotFile<'a> {
    config: &'a RunConfig,
    class: ExpressionClass,
    videos: Vec<SpotEntry>,
}

pub fn spot(cfg: &RunConfig) -> Result<()> {
    let class = cfg.expression.expect("validated");
    let model = read_model(cfg.model.as_ref().expect("validated"))?;
    if model.class != class {
        return Err(softnet_core::Error::InvalidParameter(format!(
            "model was trained for {} expressions, --expression is {class}",
            model.class
        )));
    }
    let ds = dataset(cfg)?;
    let out = prepare_out(cfg)?;
    let timelines = out.join("timelines");
    std::fs::create_dir_all(&timelines)?;
    let k = cfg.protocol.settings(class).k;
    let source = Features { dataset: &ds, cfg };
    let mut videos = Vec::new();
    for v in &ds.videos {
        let raw = predict_series(&model, &source.features(v, k)?, &v.video_id, v.frame_count())?;
        let gt = ds.intervals(&v.video_id, class);
        let entry = if raw.len() > 2 * k {
            let o = spot_detailed(&raw, k, cfg.protocol.p)?;
            let t = Timeline {
                raw: &raw,
                smoothed: &o.smoothed,
                threshold: o.threshold,
                ground_truth: &gt,
                spots: &o.spots,
            };
            export_timeline(&t, &timelines.join(format!("{}_{class}", v.video_id)))?;
            SpotEntry {
                video_id: v.video_id.clone(),
                threshold: Some(o.threshold),
                ground_truth: gt.iter().map(|&i| i.into()).collect(),
                spots: o
                    .spots
                    .iter()
                    .map(|s| SpotLine {
                        onset: s.interval.onset() + 1,
                        offset: s.interval.offset() + 1,
                        peak: s.peak_frame + 1,
                        confidence: s.confidence,
                    })
                    .collect(),
            }
        } else {
            log(format!("{}: too short to spot with k = {k}", v.video_id));
            SpotEntry {
                video_id: v.video_id.clone(),
                threshold: None,
                ground_truth: gt.iter().map(|&i| i.into()).collect(),
                spots: vec![],
            }
        };
        log(format!("{}: {} spots", v.video_id, entry.spots.len()));
        videos.push(entry);
    }
    write_json(&out.join(format!("spots_{class}.json")), &SpotFile { config: cfg, class, videos })?;
    Ok(())
}

fn compute_scores(cfg: &RunConfig, out: &Path) -> Result<CachedScores> {
    let ds = dataset(cfg)?;
    let t = Instant::now();
    let cached = score_dataset(&ds, &cfg.protocol, &Features { dataset: &ds, cfg })?;
    log(format!("scored {} folds in {:.1}s", cached.folds.len(), t.elapsed().as_secs_f64()));
    write_json(&out.join("scores.json"), &cached)?;
    Ok(cached)
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let out = prepare_out(cfg)?;
    let cached = compute_scores(cfg, &out)?;
    let report = evaluate_scores(&cached, cfg.protocol.p, cfg.protocol.iou_threshold)?;
    export_report(&report, &out.join("report.json"))?;
    println!("class    k    tp    fp    fn  precision  recall      f1  ap@[.5:.95]");
    for c in &report.classes {
        let m = &c.metrics;
        println!(
            "{:<6} {:>3} {:>5} {:>5} {:>5}  {:>9.4} {:>7.4} {:>7.4}  {:>11.4}",
            c.class.as_str(),
            c.k,
            m.counts.tp,
            m.counts.fp,
            m.counts.fn_,
            m.precision,
            m.recall,
            m.f1,
            m.ap_50_95
        );
    }
    let o = &report.overall;
    println!(
        "overall      {:>5} {:>5} {:>5}  {:>9.4} {:>7.4} {:>7.4}  {:>11.4}",
        o.counts.tp, o.counts.fp, o.counts.fn_, o.precision, o.recall, o.f1, o.ap_50_95
    );
    Ok(())
}

#[derive(Serialize)]
struct SweepFile<'a> {
    config: &'a RunConfig,
    rows: &'a [SweepRow],
}

pub fn sweep(cfg: &RunConfig) -> Result<()> {
    let out = prepare_out(cfg)?;
    let cached: CachedScores = match &cfg.scores {
        Some(path) => {
            let cached: CachedScores = serde_json::from_slice(&std::fs::read(path)?)?;
            log(format!("using cached scores from {}", path.display()));
            cached
        }
        None => compute_scores(cfg, &out)?,
    };
    let rows = sweep_p(&cached, &default_p_grid(), cfg.protocol.iou_threshold)?;
    let csv = sweep_csv(&rows);
    std::fs::write(out.join("sweep.csv"), &csv)?;
    write_json(&out.join("sweep.json"), &SweepFile { config: cfg, rows: &rows })?;
    print!("{csv}");
    Ok(())
}
