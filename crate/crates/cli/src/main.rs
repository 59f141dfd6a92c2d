//! `lctpulse`: spectra, local-control pulses, filtering, reversibility
//! optimization, truncation and analytic fits from one JSON config.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use lctpulse::io::{write_json, Document};
use lctpulse::PulseError;

use commands::Context;
use manifest::{sha256_hex, RunManifest};

#[derive(Parser, Debug)]
#[command(name = "lctpulse", version, about = "Local-control coupler pulses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON configuration document.
    #[arg(long)]
    config: PathBuf,
    /// Directory receiving every output file.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Section holding the local-control settings.
    #[arg(long)]
    seed_section: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Eigenvalue and coupling sweep over the coupler detuning.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Sweep range in GHz.
        #[arg(long, num_args = 2, allow_negative_numbers = true)]
        range: Option<Vec<f64>>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// One local-control run.
    Lct {
        #[command(flatten)]
        common: Common,
    },
    /// Bare run, low-pass reference and optional refined run.
    Filter {
        #[command(flatten)]
        common: Common,
    },
    /// Reversibility loop over lambda2 and the cutoff.
    Optimize {
        #[command(flatten)]
        common: Common,
    },
    /// Half-Gaussian truncation of an optimized pulse.
    Truncate {
        #[command(flatten)]
        common: Common,
        /// Pulse to truncate; the optimize stage runs first when absent.
        #[arg(long)]
        pulse: Option<PathBuf>,
    },
    /// Two-stage fit of the analytic pulse.
    Analytic {
        #[command(flatten)]
        common: Common,
    },
    /// Every configured stage in order.
    Pipeline {
        #[command(flatten)]
        common: Common,
        /// Continue past a stage that misses its goal.
        #[arg(long)]
        keep_going: bool,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Spectrum { common, .. }
            | Command::Lct { common }
            | Command::Filter { common }
            | Command::Optimize { common }
            | Command::Truncate { common, .. }
            | Command::Analytic { common }
            | Command::Pipeline { common, .. } => common,
        }
    }
}

fn exit_code(e: &PulseError) -> u8 {
    match e {
        PulseError::InvalidParams(_)
        | PulseError::DimensionOverflow { .. }
        | PulseError::UnknownState(_)
        | PulseError::Config(_)
        | PulseError::OptimizerInit(_)
        | PulseError::Io(_)
        | PulseError::Csv(_)
        | PulseError::Json(_) => 1,
        PulseError::Domain(_) | PulseError::Singular { .. } | PulseError::Numerical(_) => 3,
    }
}

fn run(cli: &Cli) -> Result<commands::Status, PulseError> {
    let start = Instant::now();
    let common = cli.command.common();
    let bytes = std::fs::read(&common.config)?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| PulseError::Config("config is not valid UTF-8".into()))?;
    let base = common.config.parent().map(PathBuf::from).unwrap_or_default();
    let doc = Document::parse(&text, common.seed_section.as_deref(), &base)?;
    std::fs::create_dir_all(&common.out_dir)?;
    let mut ctx = Context::new(&doc, &common.out_dir)?;

    let status = match &cli.command {
        Command::Spectrum { range, steps, .. } => {
            let range = range.as_ref().map(|r| [r[0], r[1]]);
            commands::spectrum(&mut ctx, range, *steps)?
        }
        Command::Lct { .. } => commands::lct(&mut ctx)?,
        Command::Filter { .. } => commands::filter(&mut ctx)?,
        Command::Optimize { .. } => commands::optimize(&mut ctx)?,
        Command::Truncate { pulse, .. } => commands::truncate(&mut ctx, pulse.as_deref())?,
        Command::Analytic { .. } => commands::analytic(&mut ctx)?,
        Command::Pipeline { keep_going, .. } => commands::pipeline(&mut ctx, *keep_going)?,
    };

    let root = ctx.out.root().to_path_buf();
    let manifest = RunManifest {
        config_hash: sha256_hex(&bytes),
        command: std::env::args().skip(1).collect(),
        outputs: ctx.out.into_files(),
        wall_time: start.elapsed().as_secs_f64(),
    };
    write_json(&root.join("manifest.json"), &manifest)?;
    Ok(status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(status) => match status.unconverged {
            None => ExitCode::SUCCESS,
            Some(stage) => {
                eprintln!("stage `{stage}` did not reach its goal; see its report in the output directory");
                ExitCode::from(2)
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
