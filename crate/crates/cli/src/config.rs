//! Effective run configuration: dataset profile defaults, then the TOML
//! config file, then command-line flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use softnet_core::eval::{ClassSettings, ProtocolConfig};
use softnet_core::{ExpressionClass, LabelFunction, SyntheticConfig};

/// Class-specific defaults of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Micro k = 6, macro k = 18.
    #[default]
    Casme2,
    /// Micro k = 37, macro k = 174.
    Samm,
}

impl Profile {
    pub fn protocol(self) -> ProtocolConfig {
        let (k_macro, k_micro) = match self {
            Profile::Casme2 => (18, 6),
            Profile::Samm => (174, 37),
        };
        ProtocolConfig {
            macro_settings: ClassSettings::new(ExpressionClass::Macro, k_macro),
            micro_settings: ClassSettings::new(ExpressionClass::Micro, k_micro),
            p: 0.55,
            ..ProtocolConfig::default()
        }
    }
}

/// Everything a command needs. Serialized into `run_config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub dataset_root: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Restricts the run to one class.
    pub expression: Option<ExpressionClass>,
    pub model: Option<PathBuf>,
    /// Directory of feature caches to read and fill.
    pub cache: Option<PathBuf>,
    /// Cached scores for `sweep`.
    pub scores: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub protocol: ProtocolConfig,
    pub synthetic: SyntheticConfig,
}

impl RunConfig {
    pub fn for_profile(profile: Profile) -> Self {
        Self {
            profile,
            dataset_root: None,
            out: None,
            expression: None,
            model: None,
            cache: None,
            scores: None,
            jobs: None,
            protocol: profile.protocol(),
            synthetic: SyntheticConfig::default(),
        }
    }

    /// Classes selected by `expression`, in canonical order.
    pub fn classes(&self) -> Vec<ExpressionClass> {
        match self.expression {
            Some(c) => vec![c],
            None => ExpressionClass::ALL.to_vec(),
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Class defaults (k values) of a dataset.
    #[arg(long, global = true, value_enum)]
    pub profile: Option<Profile>,
    #[arg(long, global = true)]
    pub dataset_root: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_class)]
    pub expression: Option<ExpressionClass>,
    /// Window length of the selected expression class.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Threshold parameter in [0, 1].
    #[arg(long, global = true)]
    pub p: Option<f64>,
    #[arg(long, global = true, value_parser = parse_label_fn)]
    pub label_fn: Option<LabelFunction>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    #[arg(long, global = true)]
    pub scores: Option<PathBuf>,
}

fn parse_class(s: &str) -> Result<ExpressionClass, String> {
    s.parse().map_err(|e: softnet_core::Error| e.to_string())
}

fn parse_label_fn(s: &str) -> Result<LabelFunction, String> {
    s.parse().map_err(|e: softnet_core::Error| e.to_string())
}

/// Recursively overlays `top` onto `base`.
fn merge(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(existing) => merge(existing, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

fn read_file(path: &Path) -> Result<toml::Table, Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| vec![format!("config {}: {e}", path.display())])?;
    text.parse::<toml::Table>().map_err(|e| vec![format!("config {}: {e}", path.display())])
}

/// Builds the effective configuration. Errors list every problem found.
pub fn resolve(args: &CommonArgs) -> Result<RunConfig, Vec<String>> {
    let file = match &args.config {
        Some(p) => Some(read_file(p)?),
        None => None,
    };
    let file_profile = match file.as_ref().and_then(|f| f.get("profile")) {
        Some(v) => Some(v.clone().try_into::<Profile>().map_err(|e| vec![format!("config: profile: {e}")])?),
        None => None,
    };
    let profile = args.profile.or(file_profile).unwrap_or_default();
    let mut value = toml::Value::try_from(RunConfig::for_profile(profile)).expect("defaults serialize");
    if let Some(f) = file {
        merge(&mut value, toml::Value::Table(f));
    }
    if let toml::Value::Table(t) = &mut value {
        t.insert("profile".into(), toml::Value::try_from(profile).expect("profile serializes"));
    }
    let mut cfg: RunConfig = value.try_into().map_err(|e: toml::de::Error| vec![format!("config: {e}")])?;

    let mut problems = Vec::new();
    if let Some(v) = &args.dataset_root {
        cfg.dataset_root = Some(v.clone());
    }
    if let Some(v) = &args.out {
        cfg.out = Some(v.clone());
    }
    if let Some(v) = args.expression {
        cfg.expression = Some(v);
    }
    if let Some(v) = &args.model {
        cfg.model = Some(v.clone());
    }
    if let Some(v) = &args.cache {
        cfg.cache = Some(v.clone());
    }
    if let Some(v) = &args.scores {
        cfg.scores = Some(v.clone());
    }
    if let Some(v) = args.jobs {
        cfg.jobs = Some(v);
    }
    if let Some(k) = args.k {
        match cfg.expression {
            Some(c) => cfg.protocol.settings_mut(c).k = k,
            None => problems.push("--k needs --expression to choose the class it applies to".to_string()),
        }
    }
    if let Some(p) = args.p {
        cfg.protocol.p = p;
    }
    if let Some(f) = args.label_fn {
        for c in ExpressionClass::ALL {
            cfg.protocol.settings_mut(c).train.label_function = f;
        }
    }
    if let Some(s) = args.seed {
        cfg.protocol.seed = s;
        cfg.synthetic.seed = s;
    }
    cfg.protocol.classes = cfg.classes();
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(problems)
    }
}

/// What a command requires of the configuration.
#[derive(Debug, Clone, Copy, Default)]
pub struct Needs {
    pub dataset: bool,
    pub out: bool,
    pub expression: bool,
    pub model: bool,
    pub protocol: bool,
    pub synthetic: bool,
}

/// Checks everything up front so that nothing is written on failure.
pub fn validate(cfg: &RunConfig, needs: Needs) -> Result<(), Vec<String>> {
    let mut problems = Vec::new();
    if needs.dataset {
        match &cfg.dataset_root {
            None => problems.push("dataset root is required (--dataset-root)".to_string()),
            Some(p) if !p.is_dir() => problems.push(format!("dataset root {} does not exist", p.display())),
            Some(_) => {}
        }
    }
    if needs.out && cfg.out.is_none() {
        problems.push("output directory is required (--out)".to_string());
    }
    if needs.expression && cfg.expression.is_none() {
        problems.push("an expression class is required (--expression macro|micro)".to_string());
    }
    if needs.model {
        match &cfg.model {
            None => problems.push("a model file is required (--model)".to_string()),
            Some(p) if !p.is_file() => problems.push(format!("model file {} does not exist", p.display())),
            Some(_) => {}
        }
    }
    if let Some(s) = &cfg.scores {
        if !s.is_file() {
            problems.push(format!("scores file {} does not exist", s.display()));
        }
    }
    if cfg.jobs == Some(0) {
        problems.push("--jobs must be at least 1".to_string());
    }
    if needs.protocol {
        if let Err(e) = cfg.protocol.validate() {
            problems.extend(e.to_string().trim_start_matches("invalid parameter: ").split("; ").map(String::from));
        }
    }
    if needs.synthetic {
        if let Err(e) = cfg.synthetic.validate() {
            problems.extend(e.to_string().trim_start_matches("invalid parameter: ").split("; ").map(String::from));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems)
    }
}
