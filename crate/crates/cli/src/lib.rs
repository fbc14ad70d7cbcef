//! `atl`: synthetic data generation, the adaptive transfer schedule, model
//! evaluation and reporting.
//!
//! Exit codes: 0 ok, 1 usage, 2 data error, 3 training divergence.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use atl_core::dataio::TargetChannel;
use atl_core::transfer::MetaInputMode;
use atl_core::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{cmd_evaluate, cmd_report, cmd_run, cmd_synth, cmd_verify, RunArtifacts};
pub use config::{Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] atl_core::Error),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Divergence => 3,
            },
            CliError::Io { .. } | CliError::Verification(_) => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "atl", version, about = "Adaptive transfer learning for wind power forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one synthetic CSV per farm plus a manifest into the data dir.
    Synth(Common),
    /// Run the schedule (or the cross-task protocol) for every seed.
    Run(Common),
    /// Evaluate a saved ensemble on the test window of a dataset.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Ensemble bundle written by `run`.
        #[arg(long)]
        model: PathBuf,
        /// Dataset CSV.
        #[arg(long)]
        data: PathBuf,
        /// Defaults to `<output_dir>/evaluate/<farm>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize `metrics.json`, or run the oracle checks with `--verify`.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        verify: bool,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub meta_inputs: Option<MetaArg>,
    #[arg(long, value_enum)]
    pub target: Option<TargetArg>,
    #[arg(long)]
    pub cross_task: bool,
    #[arg(long)]
    pub source_farm: Option<String>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetaArg {
    All,
    Last,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TargetArg {
    Power,
    Speed,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            runs: self.runs,
            meta_inputs: self.meta_inputs.map(|m| match m {
                MetaArg::All => MetaInputMode::AllThree,
                MetaArg::Last => MetaInputMode::LastOnly,
            }),
            target: self.target.map(|t| match t {
                TargetArg::Power => TargetChannel::Power,
                TargetArg::Speed => TargetChannel::Speed,
            }),
            cross_task: self.cross_task,
            source_farm: self.source_farm.clone(),
        }
    }

    fn load(&self) -> Result<RunConfig, CliError> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| CliError::Usage("--config is required".into()))?;
        let mut cfg = RunConfig::load(path)?;
        cfg.apply(&self.overrides());
        cfg.validate()?;
        Ok(cfg)
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(c) => {
            let cfg = c.load()?;
            let files = cmd_synth(&cfg, c.force)?;
            println!("wrote {} farm files to {}", files.len(), cfg.paths.data_dir.display());
        }
        Command::Run(c) => {
            let cfg = c.load()?;
            let art = cmd_run(&cfg, c.force)?;
            println!("{}", art.summary);
            println!("artifacts in {}", art.output_dir.display());
        }
        Command::Evaluate {
            common,
            model,
            data,
            out,
        } => {
            let cfg = common.load()?;
            let dir = cmd_evaluate(&cfg, &model, &data, out.as_deref(), common.force)?;
            println!("wrote {}", dir.display());
        }
        Command::Report { common, verify } => {
            if verify {
                let seed = match (&common.config, common.seed) {
                    (_, Some(s)) => s,
                    (Some(_), None) => common.load()?.seed,
                    (None, None) => return Err(CliError::Usage("--verify needs --seed or --config".into())),
                };
                let (json, ok) = cmd_verify(seed)?;
                println!("{json}");
                if !ok {
                    return Err(CliError::Verification("at least one check failed".into()));
                }
            } else {
                print!("{}", cmd_report(&common.load()?)?);
            }
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
