//! `posedo` command-line driver.
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;

#[derive(Parser)]
#[command(name = "posedo", version, about = "Online calibration of agent-based simulators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `paths.output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads, overriding `workers`.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the pretraining set and fit the flow.
    Pretrain {
        #[command(flatten)]
        common: Common,
        /// Overrides `seeds.flow`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one online calibration on one instance.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Instance file written by `posedo instances`.
        #[arg(long)]
        instance: PathBuf,
        /// Instance id when the file holds several.
        #[arg(long)]
        instance_id: Option<String>,
        #[arg(long)]
        variant: String,
        /// Overrides `seeds.run`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the instance × variant × repetition matrix.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Overrides `seeds.stream` for generated instances.
        #[arg(long)]
        seed: Option<u64>,
        /// Restricts the matrix to one variant.
        #[arg(long)]
        variant: Option<String>,
    },
    /// Detection densities of full PosEDO over a threshold sweep.
    DetectEval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        instance_id: Option<String>,
        /// Comma-separated thresholds, overriding `bench.epsilons`.
        #[arg(long, value_delimiter = ',')]
        epsilon: Option<Vec<f64>>,
        /// Overrides `seeds.run`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate benchmark instances and export their observed streams.
    Instances {
        #[command(flatten)]
        common: Common,
        /// Overrides `seeds.stream`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the effective configuration as JSON.
    Config {
        #[command(flatten)]
        common: Common,
        /// Simulator kind for defaults when no config is given.
        #[arg(long)]
        kind: Option<String>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Pretrain { common, seed } => {
            let mut cfg = commands::load_config(&common.config, &common.out, common.workers)?;
            if let Some(s) = seed {
                cfg.seeds.flow = s;
            }
            cfg.validate()?;
            commands::pretrain(&cfg)
        }
        Command::Calibrate {
            common,
            instance,
            instance_id,
            variant,
            seed,
        } => {
            let mut cfg = commands::load_config(&common.config, &common.out, common.workers)?;
            if let Some(s) = seed {
                cfg.seeds.run = s;
            }
            cfg.validate()?;
            commands::calibrate(&cfg, &instance, instance_id.as_deref(), &variant)
        }
        Command::Bench { common, seed, variant } => {
            let mut cfg = commands::load_config(&common.config, &common.out, common.workers)?;
            if let Some(s) = seed {
                cfg.seeds.stream = s;
            }
            if let Some(v) = variant {
                cfg.bench.variants = vec![commands::parse_variant(&v)?];
            }
            cfg.validate()?;
            commands::bench(&cfg)
        }
        Command::DetectEval {
            common,
            instance,
            instance_id,
            epsilon,
            seed,
        } => {
            let mut cfg = commands::load_config(&common.config, &common.out, common.workers)?;
            if let Some(s) = seed {
                cfg.seeds.run = s;
            }
            if let Some(e) = epsilon {
                cfg.bench.epsilons = e;
            }
            cfg.validate()?;
            commands::detect_eval(&cfg, &instance, instance_id.as_deref())
        }
        Command::Instances { common, seed } => {
            let mut cfg = commands::load_config(&common.config, &common.out, common.workers)?;
            if let Some(s) = seed {
                cfg.seeds.stream = s;
            }
            cfg.validate()?;
            commands::instances(&cfg)
        }
        Command::Config { common, kind } => commands::print_config(&common.config, kind.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
