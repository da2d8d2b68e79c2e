//! Command-line front end for `artembed`.
//!
//! Every subcommand writes its outputs and a `<command>.manifest.json` run
//! record into `--out` (default: the working directory). Settings resolve
//! as flag, then `--config` TOML file, then built-in default.

mod commands;
mod context;
mod error;

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{PredictionRecord, RetrievalRecord};
pub use context::{ConfigFile, Context, RunManifest};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "artembed",
    version,
    about = "Artwork embedding toolkit",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Random seed for splitting and training [default: 42].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Label task, e.g. style or genre.
    #[arg(long, global = true)]
    task: Option<String>,
    /// Output directory [default: .].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML file of settings keyed by flag name; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert JSON-lines embeddings into an EMB1 store.
    Ingest(commands::IngestArgs),
    /// Partition a store into train, val and test.
    Split(commands::SplitArgs),
    /// Drop rows carrying given labels of a task.
    Filter(commands::FilterArgs),
    /// Classify by cosine to per-class prompt embeddings.
    Zeroshot(commands::ZeroShotArgs),
    /// Classify by nearest labelled references.
    Knn(commands::KnnArgs),
    /// Train a linear probe.
    ProbeTrain(commands::ProbeTrainArgs),
    /// Classify with a trained probe.
    ProbePredict(commands::ProbePredictArgs),
    /// Top-K similar images for each query.
    Retrieve(commands::RetrieveArgs),
    /// Score a predictions file.
    Eval(commands::EvalArgs),
    /// Tabulate report files.
    Report(commands::ReportArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Split(_) => "split",
            Command::Filter(_) => "filter",
            Command::Zeroshot(_) => "zeroshot",
            Command::Knn(_) => "knn",
            Command::ProbeTrain(_) => "probe-train",
            Command::ProbePredict(_) => "probe-predict",
            Command::Retrieve(_) => "retrieve",
            Command::Eval(_) => "eval",
            Command::Report(_) => "report",
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code: 0 on success, 1 on a domain error, 2 on a usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("run `artembed --help` for usage");
            }
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    let config_file = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            ConfigFile::parse(&text)?
        }
        None => ConfigFile::default(),
    };
    let mut ctx = Context::new(cli.command.name(), config_file, cli.seed, cli.out)?;
    if let Some(p) = &cli.config {
        ctx.read(p)?;
    }
    let task = ctx.opt("task", cli.task)?;
    let need_task = |t: Option<String>| t.ok_or_else(|| CliError::Usage("missing required --task".into()));
    match cli.command {
        Command::Ingest(a) => commands::ingest(&mut ctx, a)?,
        Command::Split(a) => commands::split(&mut ctx, task, a)?,
        Command::Filter(a) => commands::filter(&mut ctx, need_task(task)?, a)?,
        Command::Zeroshot(a) => commands::zeroshot(&mut ctx, task, a)?,
        Command::Knn(a) => commands::knn(&mut ctx, need_task(task)?, a)?,
        Command::ProbeTrain(a) => commands::probe_train(&mut ctx, need_task(task)?, a)?,
        Command::ProbePredict(a) => commands::probe_predict(&mut ctx, task, a)?,
        Command::Retrieve(a) => commands::retrieve(&mut ctx, a)?,
        Command::Eval(a) => commands::eval(&mut ctx, task, a)?,
        Command::Report(a) => commands::report(&mut ctx, a)?,
    }
    ctx.finish()?;
    Ok(())
}
