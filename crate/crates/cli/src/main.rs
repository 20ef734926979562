use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod config;
mod dataset;
mod eval;
mod generate;
mod output;
mod prompts;

use config::PipelineConfig;
use output::Output;

/// Synthetic worker-detection dataset pipeline: prompts, generation,
/// dataset bookkeeping and evaluation.
#[derive(Debug, Parser)]
#[command(name = "synthpipe", version)]
struct Cli {
    /// Pipeline config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the command's result here instead of the default location.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Compact JSON on stdout and JSON-formatted errors on stderr.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build prompt sets from the vocabulary.
    #[command(subcommand)]
    Prompts(PromptsCmd),
    /// Drive a generation campaign.
    #[command(subcommand)]
    Generate(GenerateCmd),
    /// Manage the dataset manifest.
    #[command(subcommand)]
    Dataset(dataset::DatasetCmd),
    /// Score detections against ground truth.
    #[command(subcommand)]
    Eval(EvalCmd),
}

#[derive(Debug, Subcommand)]
enum PromptsCmd {
    /// Every combination, in product order.
    Expand,
    /// `n` distinct combinations drawn with a fixed seed.
    Sample {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Subcommand)]
enum GenerateCmd {
    /// Start a campaign over a prompt file. Refuses if the store already
    /// holds a journal.
    Run {
        /// Prompt file (defaults to `paths.prompts`).
        #[arg(long)]
        prompts: Option<PathBuf>,
        #[command(flatten)]
        opts: GenerateOpts,
    },
    /// Continue the campaign recorded in the store.
    Resume {
        /// Drop a torn (unterminated) final journal record instead of
        /// refusing to resume.
        #[arg(long)]
        repair_journal: bool,
        #[command(flatten)]
        opts: GenerateOpts,
    },
}

#[derive(Debug, Args)]
struct GenerateOpts {
    /// Exit 0 even when some jobs failed.
    #[arg(long)]
    allow_failures: bool,
}

#[derive(Debug, Subcommand)]
enum EvalCmd {
    /// AP@0.5 and AP@[0.5:0.95] for a detections file.
    Run(eval::EvalArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = PipelineConfig::load(cli.config.as_deref())?;
    let out = Output::new(cli.output.clone(), cli.json);
    match cli.command {
        Command::Prompts(PromptsCmd::Expand) => prompts::expand(&config, &out),
        Command::Prompts(PromptsCmd::Sample { n, seed }) => prompts::sample(&config, &out, n, seed),
        Command::Generate(GenerateCmd::Run { prompts, opts }) => {
            generate::run(&config, &out, prompts.as_deref(), opts.allow_failures)
        }
        Command::Generate(GenerateCmd::Resume { repair_journal, opts }) => {
            generate::resume(&config, &out, repair_journal, opts.allow_failures)
        }
        Command::Dataset(cmd) => dataset::dispatch(&config, &out, cmd),
        Command::Eval(EvalCmd::Run(args)) => eval::run(&config, &out, args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { output::EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .init();
    let json = cli.json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = output::exit_code(&e);
            output::report_error(&e, code, json);
            ExitCode::from(code)
        }
    }
}
