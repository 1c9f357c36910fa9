use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hetrain_cli::commands::{cmd_depth_audit, cmd_eval, cmd_params, cmd_precision, cmd_train};
use hetrain_cli::config::BackendKind;
use hetrain_cli::run::RunMode;
use hetrain_cli::{CliError, RunConfig};

#[derive(Parser)]
#[command(name = "hetrain", version, about = "Encrypted local-loss MLP training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Allow parameters below the 128-bit security table.
    #[arg(long)]
    insecure_ok: bool,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::from_file(&self.config)?;
        if let Some(b) = self.backend {
            cfg.backend = b;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        Ok(cfg)
    }

    fn mode(&self) -> RunMode {
        RunMode {
            trace_precision: false,
            insecure_ok: self.insecure_ok,
            verbose: true,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train and write metrics plus the encrypted model.
    Train(Common),
    /// Score a saved model on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Model container; defaults to `<out>/model.rbot`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train while tracing per-block weight precision against the shadow model.
    Precision(Common),
    /// Suggest scheme parameters and rotation indices.
    Params(Common),
    /// Compare closed-form depths with measured ledger runs.
    DepthAudit {
        #[arg(long, default_value_t = 6)]
        blocks: usize,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut log = std::io::stderr();
    match cli.command {
        Command::Train(c) => cmd_train(&c.load()?, c.mode(), &mut log).map(drop),
        Command::Precision(c) => cmd_precision(&c.load()?, c.mode(), &mut log).map(drop),
        Command::Eval { common, model } => {
            cmd_eval(&common.load()?, model.as_deref(), common.insecure_ok, &mut log).map(drop)
        }
        Command::Params(c) => {
            let plan = cmd_params(&c.load()?, &mut std::io::sink())?;
            println!("{plan}");
            Ok(())
        }
        Command::DepthAudit { blocks } => cmd_depth_audit(blocks, &mut std::io::stdout()).map(drop),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
