use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

const SMALL: &str = r#"
[synthetic]
videos = 4
subjects = 2
frames_per_video = 60
macro_per_video = 1
micro_per_video = 1
macro_length = [12, 14]
micro_length = [5, 7]
edge_margin = 8
min_gap = 6

[protocol.macro]
k = 6
[protocol.macro.train]
epochs = 2
[protocol.micro]
k = 3
[protocol.micro.train]
epochs = 2
"#;

fn softnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_softnet")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// A small synthetic dataset, its config file and shared feature cache.
struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
    data: PathBuf,
    cache: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let config = root.join("small.toml");
        std::fs::write(&config, SMALL).unwrap();
        let data = root.join("data");
        ok(softnet(&["synth", "--config", s(&config), "--out", s(&data)]));
        let cache = root.join("cache");
        ok(softnet(&["extract", "--config", s(&config), "--dataset-root", s(&data), "--out", s(&cache)]));
        Fixture { _dir: dir, root, config, data, cache }
    })
}

fn evaluate(f: &Fixture, out: &Path) -> Output {
    ok(softnet(&[
        "evaluate",
        "--config",
        s(&f.config),
        "--dataset-root",
        s(&f.data),
        "--cache",
        s(&f.cache),
        "--out",
        s(out),
    ]))
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn evaluate_is_byte_identical_across_runs() {
    let f = fixture();
    let (a, b) = (f.root.join("eval_a"), f.root.join("eval_b"));
    let stdout = evaluate(f, &a).stdout;
    evaluate(f, &b);
    let ra = std::fs::read(a.join("report.json")).unwrap();
    assert_eq!(ra, std::fs::read(b.join("report.json")).unwrap());
    assert_eq!(std::fs::read(a.join("scores.json")).unwrap(), std::fs::read(b.join("scores.json")).unwrap());

    let report: Value = serde_json::from_slice(&ra).unwrap();
    let classes = report["classes"].as_array().unwrap();
    assert_eq!(classes.len(), 2);
    assert_eq!(classes[0]["k"], 6);
    assert_eq!(classes[1]["k"], 3);
    assert_eq!(report["folds"].as_array().unwrap().len(), 2);
    let text = String::from_utf8(stdout).unwrap();
    assert!(text.contains("overall"), "{text}");
    assert!(a.join("run_config.json").exists());
}

#[test]
fn sweep_from_cached_scores_has_nineteen_rows() {
    let f = fixture();
    let ev = f.root.join("eval_sweep");
    evaluate(f, &ev);
    let out = f.root.join("sweep");
    ok(softnet(&["sweep", "--config", s(&f.config), "--scores", s(&ev.join("scores.json")), "--out", s(&out)]));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 20);
    assert!(lines[0].starts_with("p,macro_tp"));
    assert!(lines[1].starts_with("0.05,"));
    assert!(lines[19].starts_with("0.95,"));
    let spots: Vec<u64> = lines[1..].iter().map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(spots.windows(2).all(|w| w[1] <= w[0]), "{spots:?}");
    assert_eq!(json(&out.join("sweep.json"))["rows"].as_array().unwrap().len(), 19);
}

#[test]
fn train_then_spot_writes_model_spots_and_timelines() {
    let f = fixture();
    let tr = f.root.join("train");
    let common = ["--config", s(&f.config), "--dataset-root", s(&f.data), "--cache", s(&f.cache)];
    let mut args = vec!["train", "--expression", "macro", "--out", s(&tr)];
    args.extend(common);
    ok(softnet(&args));
    let model = tr.join("macro.sftn");
    assert!(model.exists());
    assert_eq!(json(&tr.join("macro.train.json"))["report"]["epoch_losses"].as_array().unwrap().len(), 2);

    let sp = f.root.join("spot");
    let mut args = vec!["spot", "--expression", "macro", "--model", s(&model), "--out", s(&sp)];
    args.extend(common);
    ok(softnet(&args));
    let spots = json(&sp.join("spots_macro.json"));
    let videos = spots["videos"].as_array().unwrap();
    assert_eq!(videos.len(), 4);
    for v in videos {
        let id = v["video_id"].as_str().unwrap();
        assert!(v["threshold"].is_number());
        for spot in v["spots"].as_array().unwrap() {
            let (on, off) = (spot["onset"].as_u64().unwrap(), spot["offset"].as_u64().unwrap());
            assert!(1 <= on && on <= off && off <= 60);
        }
        let csv = std::fs::read_to_string(sp.join("timelines").join(format!("{id}_macro.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 61);
        assert!(sp.join("timelines").join(format!("{id}_macro.svg")).exists());
    }

    let wrong = f.root.join("spot_wrong");
    let mut args = vec!["spot", "--expression", "micro", "--model", s(&model), "--out", s(&wrong)];
    args.extend(common);
    let out = softnet(&args);
    assert_eq!(out.status.code(), Some(1));
    assert!(!wrong.exists());
}

#[test]
fn validation_errors_are_json_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = softnet(&["train", "--dataset-root", s(&dir.path().join("missing")), "--out", s(&out_dir), "--p", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let err: Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(err["error"], "validation");
    assert_eq!(err["command"], "train");
    let messages = err["messages"].as_array().unwrap();
    assert_eq!(messages.len(), 3, "{messages:?}");
    assert!(!out_dir.exists());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[protocol]\nthreshold = 0.4\n").unwrap();
    let out = softnet(&["synth", "--config", s(&config), "--out", s(&dir.path().join("d"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("threshold"));
}

#[test]
fn flags_override_the_config_file() {
    let f = fixture();
    let ev = f.root.join("eval_override");
    evaluate(f, &ev);
    let config = f.root.join("override.toml");
    let text = SMALL.replace("[protocol.macro]\nk = 6", "[protocol]\np = 0.3\nseed = 5\n\n[protocol.macro]\nk = 6");
    std::fs::write(&config, text).unwrap();
    let out = f.root.join("override");
    ok(softnet(&[
        "sweep",
        "--config",
        s(&config),
        "--scores",
        s(&ev.join("scores.json")),
        "--p",
        "0.7",
        "--expression",
        "micro",
        "--k",
        "4",
        "--out",
        s(&out),
    ]));
    let cfg = json(&out.join("run_config.json"));
    assert_eq!(cfg["protocol"]["p"], 0.7);
    assert_eq!(cfg["protocol"]["seed"], 5);
    assert_eq!(cfg["protocol"]["micro"]["k"], 4);
    assert_eq!(cfg["protocol"]["macro"]["k"], 6);
    assert_eq!(cfg["protocol"]["micro"]["train"]["epochs"], 2);
    assert_eq!(cfg["expression"], "micro");
}
