//! `softnet`: extract features, train, spot, evaluate and sweep expression
//! spotting on a dataset directory, or generate a synthetic one.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::{resolve, validate, CommonArgs, Needs};

#[derive(Parser)]
#[command(name = "softnet", version, about = "Macro- and micro-expression interval spotting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Compute and cache the motion features of every video.
    Extract,
    /// Train one model on the whole dataset.
    Train,
    /// Spot intervals with a trained model; writes spots and timelines.
    Spot,
    /// Full leave-one-subject-out protocol; writes report.json and scores.json.
    Evaluate,
    /// Re-evaluate cached scores over p = 0.05, 0.10, ..., 0.95.
    Sweep,
    /// Generate a synthetic dataset into --out.
    Synth,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Extract => "extract",
            Command::Train => "train",
            Command::Spot => "spot",
            Command::Evaluate => "evaluate",
            Command::Sweep => "sweep",
            Command::Synth => "synth",
        }
    }

    fn needs(self) -> Needs {
        let base = Needs { dataset: true, out: true, protocol: true, ..Needs::default() };
        match self {
            Command::Extract | Command::Evaluate | Command::Sweep => base,
            Command::Train => Needs { expression: true, ..base },
            Command::Spot => Needs { expression: true, model: true, ..base },
            Command::Synth => Needs { out: true, synthetic: true, ..Needs::default() },
        }
    }
}

fn fail(command: &str, kind: &str, messages: Vec<String>) -> ExitCode {
    eprintln!("{}", json!({ "command": command, "error": kind, "messages": messages }));
    ExitCode::from(if kind == "validation" { 2 } else { 1 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    let cfg = match resolve(&cli.common) {
        Ok(c) => c,
        Err(problems) => return fail(name, "validation", problems),
    };
    let mut needs = cli.command.needs();
    if matches!(cli.command, Command::Sweep) && cfg.scores.is_some() {
        // Cached scores already hold everything the sweep needs.
        needs.dataset = false;
    }
    if let Err(problems) = validate(&cfg, needs) {
        return fail(name, "validation", problems);
    }
    if let Some(jobs) = cfg.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            return fail(name, "runtime", vec![e.to_string()]);
        }
    }
    let result = match cli.command {
        Command::Extract => commands::extract(&cfg),
        Command::Train => commands::train_model(&cfg),
        Command::Spot => commands::spot(&cfg),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Sweep => commands::sweep(&cfg),
        Command::Synth => commands::synth(&cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(name, "runtime", vec![e.to_string()]),
    }
}
