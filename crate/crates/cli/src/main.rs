//! `bp-lab`: runs experiment configs and the acceptance suite.
//!
//! Exit codes: 0 success, 1 failed criteria or runtime error, 2 invalid
//! config or model, 3 degraded run (capped fraction above threshold),
//! 4 I/O failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bplab::runner::config::{parse_config, ExperimentKind, LoadedConfig, Profile};
use bplab::runner::{run_experiment, Format, ResultTable, DEGRADED_CAPPED_FRACTION};
use bplab::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bp-lab", version, about = "Branching process experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run(RunArgs),
    /// Parse a config and print the model validation report.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the acceptance suite with the seed and workers from a config.
    VerifyAll(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Output path; standard output if absent from both here and config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
}

const EXIT_FAILED: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_DEGRADED: u8 = 3;
const EXIT_IO: u8 = 4;

fn error_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => EXIT_IO,
        Error::Config(_)
        | Error::UnknownField(_)
        | Error::Validation(_)
        | Error::InvalidLaw(_)
        | Error::InvalidModel(_) => EXIT_INVALID,
        _ => EXIT_FAILED,
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(error_code(e))
}

fn load(path: &Path) -> Result<LoadedConfig, Error> {
    let loaded = parse_config(path)?;
    if let Some(report) = &loaded.report {
        eprintln!("model validation:\n{report}");
    }
    Ok(loaded)
}

fn execute(args: &RunArgs, verify_all: bool) -> ExitCode {
    let mut loaded = match load(&args.config) {
        Ok(l) => l,
        Err(e) => return fail(&e),
    };
    let cfg = &mut loaded.config;
    if verify_all {
        cfg.kind = ExperimentKind::VerifyAll;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(w) = args.workers {
        if w == 0 {
            return fail(&Error::Config("workers must be positive".into()));
        }
        cfg.workers = Some(w);
    }
    let format = match (&args.format, &cfg.output) {
        (Some(f), _) => f.parse::<Format>().expect("validated by clap"),
        (None, Some(o)) => o.format,
        (None, None) => Format::Csv,
    };
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(|o| PathBuf::from(&o.path)));
    eprintln!(
        "bp-lab {} kind={} seed={} workers={}{}",
        env!("CARGO_PKG_VERSION"),
        cfg.kind.name(),
        cfg.seed,
        cfg.workers(),
        if cfg.kind == ExperimentKind::VerifyAll {
            format!(" profile={:?}", cfg.profile.unwrap_or(Profile::Full)).to_lowercase()
        } else {
            String::new()
        }
    );
    let table = match run_experiment(&loaded) {
        Ok(t) => t,
        Err(e) => return fail(&e),
    };
    if let Err(e) = write_table(&table, out, format) {
        return fail(&e);
    }
    let failures = table.failures().count();
    if loaded.config.kind == ExperimentKind::VerifyAll && failures > 0 {
        eprintln!("{failures} criteria failed");
        return ExitCode::from(EXIT_FAILED);
    }
    let capped = table.max_capped_fraction();
    if capped > DEGRADED_CAPPED_FRACTION {
        eprintln!("degraded: capped fraction {capped:e} exceeds {DEGRADED_CAPPED_FRACTION:e}");
        return ExitCode::from(EXIT_DEGRADED);
    }
    ExitCode::SUCCESS
}

fn write_table(table: &ResultTable, out: Option<PathBuf>, format: Format) -> Result<(), Error> {
    match out {
        Some(path) => table.emit(&path, format),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(table.render(format).as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|source| Error::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(args) => execute(args, false),
        Command::VerifyAll(args) => execute(args, true),
        Command::Validate { config } => match parse_config(config) {
            Ok(loaded) => {
                match &loaded.report {
                    Some(r) => print!("{r}"),
                    None => println!("config ok (no model)"),
                }
                ExitCode::SUCCESS
            }
            Err(Error::Validation(r)) => {
                print!("{r}");
                eprintln!("model validation failed");
                ExitCode::from(EXIT_INVALID)
            }
            Err(e) => fail(&e),
        },
    }
}
