// `!(x >= 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod cli;
mod commands;
mod config;
mod provenance;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};
use thiserror::Error;

use cli::{Cli, Command, PhantomCommand};
use commands::Ctx;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{stage}: {source}")]
    Core {
        stage: &'static str,
        #[source]
        source: dpet_core::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 3 for numerical failures, 2 for everything the user can fix.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core { source, .. } if source.is_numeric() => 3,
            _ => 2,
        }
    }
}

fn init_logging(level: &str) -> Result<(), CliError> {
    let filter: log::LevelFilter = level
        .parse()
        .map_err(|_| CliError::Usage(format!("unknown log level `{level}`")))?;
    env_logger::Builder::new().filter_level(filter).format_timestamp(None).init();
    Ok(())
}

fn run() -> Result<(), CliError> {
    let raw: Vec<String> = std::env::args_os()
        .map(|a| a.into_string().map_err(|a| CliError::Usage(format!("argument {a:?} is not UTF-8"))))
        .collect::<Result<_, _>>()?;
    let root = Cli::command();
    let args = config::expand_args(raw, &root)?;
    let matches = root.clone().try_get_matches_from(args).unwrap_or_else(|e| e.exit());
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    init_logging(&cli.log_level)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let ctx = Ctx {
        seed: cli.seed,
        workers: cli.workers,
        config: config::snapshot(&root, &matches),
    };
    match &cli.command {
        Command::Phantom(PhantomCommand::Generate(a)) => commands::phantom_generate(a, &ctx),
        Command::MotionCorrect(a) => commands::motion(a, &ctx),
        Command::SegmentIca(a) => commands::segment_ica_cmd(a, &ctx),
        Command::Idif(a) => commands::idif(a, &ctx),
        Command::Mcif(a) => commands::mcif(a, &ctx),
        Command::Patlak(a) => commands::patlak(a, &ctx),
        Command::Suv(a) => commands::suv(a, &ctx),
        Command::SegmentTumor(a) => commands::segment_tumor(a, &ctx),
        Command::Harmonize(a) => commands::harmonize(a, &ctx),
        Command::Extract(a) => commands::extract(a, &ctx),
        Command::Export(a) => commands::export(a, &ctx),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
