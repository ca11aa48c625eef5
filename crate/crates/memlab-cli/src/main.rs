use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use memlab_cli::commands::{self, AnswerFlags};
use memlab_cli::config::RunConfig;
use memlab_cli::CliError;

/// Long-conversation memory engine and benchmark pipeline.
#[derive(Parser)]
#[command(name = "memlab", version, about)]
struct Cli {
    /// Path to the run configuration (TOML).
    #[arg(long, global = true, default_value = "memlab.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a conversation (plans, questions, dialogue); resumable.
    Synthesize {
        /// Target size: 128k, 500k, 1m, 10m, or mini.
        #[arg(long)]
        length: Option<String>,
        /// Category: general, coding, or math.
        #[arg(long)]
        category: Option<String>,
        /// Workspace directory (one sub-directory per conversation).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate probing questions from a conversation and its plan.
    Probe {
        #[arg(long)]
        conversation: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        /// One ability name or "all".
        #[arg(long, default_value = "all")]
        ability: String,
        /// Probes retained per ability.
        #[arg(long, default_value_t = 2)]
        cap: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the memory store from a conversation.
    Ingest {
        #[arg(long)]
        conversation: PathBuf,
        /// Memory store directory.
        #[arg(long)]
        store: PathBuf,
    },
    /// Answer one question or a probes file against a memory store.
    Answer {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, conflicts_with = "probes")]
        question: Option<String>,
        /// Probes JSON file or directory of per-ability files.
        #[arg(long)]
        probes: Option<PathBuf>,
        /// Retrieval budget.
        #[arg(long)]
        k: Option<usize>,
        /// Working-memory window size in pairs.
        #[arg(long)]
        z: Option<usize>,
        #[arg(long)]
        no_retrieval: bool,
        #[arg(long)]
        no_scratchpad: bool,
        #[arg(long)]
        no_working: bool,
        #[arg(long)]
        no_filter: bool,
        /// Pass-through baseline over a full transcript (needs --conversation).
        #[arg(long)]
        vanilla: bool,
        #[arg(long)]
        conversation: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score answers against probes with the judge model.
    Evaluate {
        #[arg(long)]
        probes: PathBuf,
        #[arg(long)]
        answers: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate score files into an ability × method table.
    Report {
        /// Directory scanned for *scores.jsonl, or one score file.
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
        #[arg(long, default_value = "md")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synthesize {
            length,
            category,
            out,
        } => {
            let config = RunConfig::load(&cli.config)?;
            commands::synthesize(
                &config,
                length.as_deref(),
                category.as_deref(),
                out.as_deref(),
            )?;
        }
        Command::Probe {
            conversation,
            plan,
            ability,
            cap,
            out,
        } => {
            let config = RunConfig::load(&cli.config)?;
            commands::probe(&config, &conversation, &plan, &ability, cap, out.as_deref())?;
        }
        Command::Ingest {
            conversation,
            store,
        } => {
            let config = RunConfig::load(&cli.config)?;
            commands::ingest(&config, &conversation, &store)?;
        }
        Command::Answer {
            store,
            question,
            probes,
            k,
            z,
            no_retrieval,
            no_scratchpad,
            no_working,
            no_filter,
            vanilla,
            conversation,
            out,
        } => {
            let config = RunConfig::load(&cli.config)?;
            let flags = AnswerFlags {
                k,
                z,
                no_retrieval,
                no_scratchpad,
                no_working,
                no_filter,
                vanilla,
            };
            commands::answer(
                &config,
                &store,
                question.as_deref(),
                probes.as_deref(),
                &flags,
                conversation.as_deref(),
                out.as_deref(),
            )?;
        }
        Command::Evaluate {
            probes,
            answers,
            out,
        } => {
            let config = RunConfig::load(&cli.config)?;
            commands::evaluate(&config, &probes, &answers, out.as_deref())?;
        }
        Command::Report { input, format, out } => {
            commands::report(&input, &format, out.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
