//! `tempora`: command-line driver for reward scoring, curriculum filtering,
//! simulated GRPO training, evaluation and benchmark curation.
//!
//! Exit codes: 0 success, 1 validation error, 2 I/O error, 3 internal error.

mod commands;
mod config;
mod error;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use commands::{annotate, cold_start, curate, evaluate, filter, objective, parse_check, score, synth, train_sim};
use commands::{Context, Outcome};
use config::RunConfig;
use error::CliError;
use output::OutputLock;

#[derive(Debug, Parser)]
#[command(name = "tempora", version, about = "Verifiable-reward RL toolkit for temporal video grounding")]
struct Cli {
    /// Seed for every randomized step; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML or JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory, depending on the command.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Print the machine-readable summary instead of the table.
    #[arg(long, global = true)]
    json: bool,
    /// More log output; repeat for more detail.
    #[arg(long, short, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Compute format, IoU and tIoU rewards for model responses.
    Score(score::ScoreArgs),
    /// Select a training subset by difficulty.
    Filter(filter::FilterArgs),
    /// Train the simulated policy with GRPO.
    TrainSim(train_sim::TrainSimArgs),
    /// Score predictions with R1@m and mIoU.
    Evaluate(evaluate::EvaluateArgs),
    /// Draw a balanced benchmark from a candidate pool.
    Curate(curate::CurateArgs),
    /// Check responses against the reasoning template.
    ParseCheck(parse_check::ParseCheckArgs),
    /// Build cold-start fine-tuning pairs from captioned segments.
    ColdStart(cold_start::ColdStartArgs),
    /// Write a synthetic dataset.
    Synth(synth::SynthArgs),
    /// Evaluate the GRPO objective on recorded rollout groups.
    Objective(objective::ObjectiveArgs),
    /// Label sample queries with semantic categories.
    Annotate(annotate::AnnotateArgs),
    /// Serve the keyword annotator over stdin/stdout.
    AnnotateServe,
}

fn resolve(cli: &Cli) -> Result<Context, CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match &cli.command {
        Cmd::Filter(a) => a.apply(&mut config),
        Cmd::TrainSim(a) => a.apply(&mut config),
        Cmd::Evaluate(a) => a.apply(&mut config),
        Cmd::Curate(a) => a.apply(&mut config),
        Cmd::Objective(a) => a.apply(&mut config),
        Cmd::Annotate(a) => a.apply(&mut config),
        _ => {}
    }
    let seed = cli.seed.unwrap_or(config.effective_seed());
    config.seed = Some(seed);
    config.trainer.seed = seed;
    config.validate()?;
    Ok(Context { config, seed, output: cli.output.clone() })
}

fn dispatch(ctx: &Context, cmd: &Cmd) -> Result<Outcome, CliError> {
    match cmd {
        Cmd::Score(a) => score::run(ctx, a),
        Cmd::Filter(a) => filter::run(ctx, a),
        Cmd::TrainSim(a) => train_sim::run(ctx, a),
        Cmd::Evaluate(a) => evaluate::run(ctx, a),
        Cmd::Curate(a) => curate::run(ctx, a),
        Cmd::ParseCheck(a) => parse_check::run(ctx, a),
        Cmd::ColdStart(a) => cold_start::run(ctx, a),
        Cmd::Synth(a) => synth::run(ctx, a),
        Cmd::Objective(a) => objective::run(ctx, a),
        Cmd::Annotate(a) => annotate::run(ctx, a),
        Cmd::AnnotateServe => unreachable!("handled before dispatch"),
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    if matches!(cli.command, Cmd::AnnotateServe) {
        let served = annotate::serve()?;
        log::info!("served {served} request(s)");
        return Ok(true);
    }
    let ctx = resolve(&cli)?;
    let _lock = ctx.output.as_deref().map(OutputLock::acquire).transpose()?;
    let outcome = dispatch(&ctx, &cli.command)?;
    outcome.files.commit()?;

    let mut stdout = std::io::stdout().lock();
    let printed = if cli.json {
        serde_json::to_writer_pretty(&mut stdout, &outcome.json)
            .map_err(std::io::Error::from)
            .and_then(|_| writeln!(stdout))
    } else {
        stdout.write_all(outcome.table.as_bytes())
    };
    printed.map_err(|e| CliError::io("writing to stdout", e))?;
    Ok(!outcome.partial_failure)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
