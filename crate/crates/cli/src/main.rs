//! `lmxpairs`: the pair-mining pipeline as composable subcommands. Every
//! subcommand writes its artifacts and a `manifest.json` into `--out`.

mod analysis;
mod classify;
mod evaluate;
mod inputs;
mod model;
mod pairs;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "lmxpairs", version, about = "Mine (harder, easier) piano score pairs from generated variations")]
struct Cli {
    /// Directory that receives every artifact and the manifest.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Worker threads for per-piece work; results match `--jobs 1`.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate MusicXML files.
    Parse(analysis::ParseArgs),
    /// Convert between MusicXML and LMX tokens.
    Lmx {
        #[command(subcommand)]
        action: analysis::LmxAction,
    },
    /// Extract melody skylines.
    Skyline(analysis::ScoresArgs),
    /// Duration-weighted pitch-class profiles, optionally perturbed.
    Profile(analysis::ProfileArgs),
    /// Difficulty feature vectors.
    Features(analysis::ScoresArgs),
    /// Fit the naive Bayes difficulty classifier.
    FitGnb(classify::FitArgs),
    /// Difficulty posteriors for feature vectors.
    Classify(classify::ClassifyArgs),
    /// Style embeddings.
    Embed(analysis::EmbedArgs),
    /// Mine (harder, easier) variation pairs.
    MinePairs(pairs::MineArgs),
    /// Build conditioned or adaptation training sequences.
    BuildSeqs(model::BuildArgs),
    /// Train the tiny language model.
    Train(model::TrainArgs),
    /// Sample variations from a trained model.
    Sample(model::SampleArgs),
    /// Score variations against their originals and render tables.
    Evaluate(evaluate::EvalArgs),
    /// Write a synthetic two-staff corpus.
    GenFixtures(analysis::FixtureArgs),
}

/// Settings shared by every subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct Ctx {
    #[serde(skip)]
    pub out: PathBuf,
    pub seed: u64,
    pub jobs: usize,
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let ctx = Ctx { out: cli.out, seed: cli.seed, jobs: cli.jobs };
    match cli.command {
        Command::Parse(a) => analysis::parse(&ctx, a),
        Command::Lmx { action } => analysis::lmx(&ctx, action),
        Command::Skyline(a) => analysis::skyline(&ctx, a),
        Command::Profile(a) => analysis::profile(&ctx, a),
        Command::Features(a) => analysis::features(&ctx, a),
        Command::FitGnb(a) => classify::fit_gnb(&ctx, a),
        Command::Classify(a) => classify::classify(&ctx, a),
        Command::Embed(a) => analysis::embed(&ctx, a),
        Command::MinePairs(a) => pairs::mine_pairs(&ctx, a),
        Command::BuildSeqs(a) => model::build_seqs(&ctx, a),
        Command::Train(a) => model::train(&ctx, a),
        Command::Sample(a) => model::sample(&ctx, a),
        Command::Evaluate(a) => evaluate::evaluate(&ctx, a),
        Command::GenFixtures(a) => analysis::gen_fixtures(&ctx, a),
    }
}

fn emit_error(kind: &str, message: &str) {
    let line = serde_json::json!({ "error": kind, "message": message.replace('\n', " ").trim() });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            emit_error("usage", &usage_message(&e));
            return ExitCode::from(2);
        }
    };
    let level = if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn };
    env_logger::Builder::new().filter_level(level).format_target(false).init();
    if cli.jobs == 0 {
        emit_error("usage", "--jobs must be at least 1");
        return ExitCode::from(2);
    }
    rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global().expect("thread pool starts once");
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            emit_error(run::error_kind(&e), &format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}

/// The first line of a clap error, without its usage footer.
fn usage_message(e: &clap::Error) -> String {
    let text = e.to_string();
    text.lines().next().unwrap_or_default().trim_start_matches("error: ").to_string()
}
