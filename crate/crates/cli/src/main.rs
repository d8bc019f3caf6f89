use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ptycho_core::harness::{
    cmd_evaluate, cmd_reconstruct, cmd_simulate, cmd_sweep, cmd_train, ExperimentConfig, MethodKind, RunOptions,
};
use ptycho_core::Error;

/// Ptychographic reconstruction experiments.
#[derive(Parser)]
#[command(name = "ptycho", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Overwrite existing results.
    #[arg(long)]
    force: bool,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Overrides the configured base seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate phantoms, training images and measurement sets.
    Simulate(Common),
    /// Train the denoiser.
    Train(Common),
    /// Reconstruct every measurement set.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Overrides the configured method (rpie, awf, diffusion).
        #[arg(long)]
        method: Option<String>,
    },
    /// Score reconstructions against the reference phantoms.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        recon_dir: Option<PathBuf>,
        #[arg(long)]
        reference_dir: Option<PathBuf>,
    },
    /// Simulate, train, reconstruct with every method and tabulate.
    Sweep(Common),
}

fn load(common: &Common) -> Result<(ExperimentConfig, RunOptions), Error> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    let opts = RunOptions {
        force: common.force,
        jobs: common.jobs,
    };
    Ok((cfg, opts))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(c) => {
            let (cfg, opts) = load(&c)?;
            let s = cmd_simulate(&cfg, &opts)?;
            println!("wrote {} measurement sets to {}", s.sets.len(), s.dataset.display());
        }
        Command::Train(c) => {
            let (cfg, opts) = load(&c)?;
            let s = cmd_train(&cfg, &opts)?;
            if let Some(from) = s.resumed_from {
                println!("resumed from step {from}");
            }
            println!("trained {} steps; model at {}", s.steps, s.model.display());
        }
        Command::Reconstruct { common, method } => {
            let (cfg, opts) = load(&common)?;
            let method: MethodKind = match method {
                Some(m) => m.parse()?,
                None => cfg.method,
            };
            let s = cmd_reconstruct(&cfg, method, &opts)?;
            println!("reconstructed {} sets with {} into {}", s.sets, method.name(), s.dir.display());
        }
        Command::Evaluate {
            common,
            recon_dir,
            reference_dir,
        } => {
            let (cfg, opts) = load(&common)?;
            let recon = recon_dir.unwrap_or_else(|| cfg.recon_dir());
            let reference = reference_dir.unwrap_or_else(|| cfg.dataset_dir());
            let s = cmd_evaluate(&recon, &reference, &cfg.report_dir(), opts.force)?;
            print!("{}", s.summary_csv());
        }
        Command::Sweep(c) => {
            let (cfg, opts) = load(&c)?;
            let s = cmd_sweep(&cfg, &opts)?;
            print!("{}", s.table_csv);
            println!("tables written to {}", s.table_path.parent().unwrap_or(&cfg.output_dir).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
