use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Action-state-update dialogue state tracking toolkit.
#[derive(Debug, Parser)]
#[command(name = "asu", version)]
struct Cli {
    /// Ontology JSON (defaults to the built-in Cambridge restaurant ontology).
    #[arg(long, global = true)]
    ontology: Option<PathBuf>,
    /// Venue database JSON (defaults to the built-in fixture).
    #[arg(long, global = true)]
    venues: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert DSTC2-format log/label directories into an annotated corpus.
    #[command(name = "ingest-dstc2")]
    IngestDstc2 {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate corpora and training datasets.
    #[command(subcommand)]
    Datagen(Datagen),
    /// Train a relevance scorer on `<data-dir>/<dataset>.train.jsonl`.
    Train {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        epochs: usize,
        #[arg(long, default_value_t = 0.2)]
        learning_rate: f64,
        #[arg(long, default_value_t = 1e-7)]
        l2: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run the user simulator against the system and report metrics.
    Simulate {
        /// `oracle`, `zero`, or a model file.
        #[arg(long, default_value = "oracle")]
        scorer: String,
        #[arg(long, default_value_t = 1000)]
        dialogues: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        sim: SimArgs,
        /// Also write per-dialogue records (JSONL).
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Goal / request accuracy of a scorer on an annotated corpus.
    EvalCorpus {
        #[arg(long)]
        corpus: PathBuf,
        /// `oracle`, `zero`, or a model file.
        #[arg(long)]
        scorer: String,
        /// `gold` replays annotated actions between turns; `live` applies the scorer's own.
        #[arg(long, default_value = "gold", value_parser = ["gold", "live"])]
        mode: String,
    },
    /// Serve dialogue sessions over HTTP.
    Serve(ServeArgs),
    /// Talk to the system in the terminal.
    Chat {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Debug, Args)]
struct SimArgs {
    /// Corpus whose user turns enrich the surface realizations.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Use the single-venue, non-referring corpus-style user.
    #[arg(long)]
    corpus_style: bool,
}

#[derive(Debug, Subcommand)]
enum Datagen {
    /// Synthetic annotated corpus: corpus-style users against the oracle system.
    Corpus {
        #[arg(long, default_value_t = 1600)]
        dialogues: usize,
        #[arg(long, default_value_t = 1_000_000)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// One positive per intended action plus weighted distractors.
    Baseline {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 5)]
        negatives: usize,
        #[arg(long, default_value_t = 0.25)]
        dev_fraction: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Baseline plus generated referring-expression requests.
    ExtH {
        #[arg(long)]
        corpus: PathBuf,
        /// Directory holding `baseline.*.jsonl`.
        #[arg(long)]
        baseline_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        train: usize,
        #[arg(long, default_value_t = 3_000)]
        dev: usize,
        #[arg(long, default_value_t = 5)]
        negatives: usize,
        #[arg(long, default_value_t = 2)]
        seed: u64,
    },
    /// Baseline plus hard examples mined in simulation with a baseline model.
    ExtA {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        baseline_dir: PathBuf,
        /// Frozen model used for mining.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 5000)]
        dialogues: usize,
        #[arg(long, default_value_t = 0.99)]
        t1: f64,
        #[arg(long, default_value_t = 0.5)]
        t2: f64,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 0.2)]
        dev_fraction: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Model file, optionally `id=path`; repeatable. The first is also `default`.
    #[arg(long, required = true)]
    model: Vec<String>,
    #[arg(long, env = "ASU_DATA_DIR", default_value = "asu-data")]
    data_dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Include executed actions and top scores in utterance replies.
    #[arg(long)]
    debug_scores: bool,
    #[arg(long, default_value_t = 0)]
    task_seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(summary) => {
            // A closed stdout (e.g. piped into `head`) is not an error.
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
