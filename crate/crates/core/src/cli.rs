//! Command-line surface. Exit codes: 0 success, 1 usage, 2 configuration or
//! I/O error, 3 numerical failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands;
use crate::error::{Error, Result};
use crate::io::config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "sarwave", version, about = "Waveform learning and sparse imaging for passive bistatic SAR")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// JSON run configuration or a manifest from an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the simulation and shuffling seeds.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Replaces the SNR list with a single level.
    #[arg(long = "snr-db", global = true, allow_negative_numbers = true)]
    pub snr_db: Option<f64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub layers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct InputArgs {
    /// CMPX file whose rows are measurement vectors.
    #[arg(long)]
    pub data: PathBuf,
    /// CMPX waveform vector; all ones when omitted.
    #[arg(long)]
    pub waveform: Option<PathBuf>,
    /// CMPX sensing matrix; rebuilt from the configuration when omitted.
    #[arg(long)]
    pub sensing: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and save the sensing matrix and the encoder weight matrix.
    MakeModel,
    /// Simulate training and test measurements at every configured SNR.
    GenData,
    /// Run the encoder on measurements and write the normalized images.
    Reconstruct {
        #[command(flatten)]
        input: InputArgs,
        /// Threshold; defaults to step_size * regularization.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Matched-filter backprojection of measurements.
    Backproject {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Learn the waveform and threshold with projected SGD.
    Train {
        /// Training measurements; simulated from the configuration when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Test measurements of the configured test scene; simulated when omitted.
        #[arg(long)]
        test_data: Option<PathBuf>,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck,
    /// Metrics, averages and cross-sections for a test set.
    Evaluate {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        threshold: Option<f64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::MakeModel => "make-model",
            Command::GenData => "gen-data",
            Command::Reconstruct { .. } => "reconstruct",
            Command::Backproject { .. } => "backproject",
            Command::Train { .. } => "train",
            Command::Gradcheck => "gradcheck",
            Command::Evaluate { .. } => "evaluate",
        }
    }
}

/// Loads the configuration and applies command-line overrides.
pub fn resolve_config(global: &GlobalArgs) -> Result<RunConfig> {
    let mut config = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        config.simulation.seed = seed;
        config.train.seed = seed;
    }
    if let Some(snr) = global.snr_db {
        config.simulation.snr_db = vec![snr];
    }
    if let Some(epochs) = global.epochs {
        config.train.epochs = epochs;
    }
    if let Some(layers) = global.layers {
        config.network.layers = layers;
    }
    if let Some(out) = &global.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_CONFIG
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = resolve_config(&cli.global).and_then(|config| commands::execute(&cli.command, &config));
    match result {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
