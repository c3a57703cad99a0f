use std::path::PathBuf;
use std::process::ExitCode;

use channel_motor::experiment::{exit_code, run_config, ExperimentConfig, ExperimentKind, SEED_ENV};
use channel_motor::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "chanmotor",
    version,
    about = "Diffusion in narrow channels with wings: graph reduction experiments",
    after_help = format!(
        "Seed precedence: --seed, then ${SEED_ENV}, then the config file.\n\
         Exit status: 0 ok, 2 usage or input error, 3 numeric fault."
    )
)]
struct Cli {
    /// JSON experiment config; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the Monte Carlo batches.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Check a channel against the geometric assumptions.
    ValidateGeometry,
    /// Estimate the width correlation kernel K of an environment.
    #[command(name = "estimate-K")]
    EstimateK,
    /// Monte Carlo of the graph diffusion.
    GraphMc,
    /// Monte Carlo of the reflected 2-D process at one epsilon.
    SdeMc,
    /// Reflected process over a list of epsilons against the graph limit.
    EpsSweep,
    /// Effective speed: K, wing moments and the inverse speed.
    Speed,
    /// Quadrature against the boundary-value solver on random shapes.
    OracleCompare,
    /// Run the kind named in the config file.
    Run,
}

impl Command {
    fn kind(self) -> Option<ExperimentKind> {
        Some(match self {
            Command::ValidateGeometry => ExperimentKind::ValidateGeometry,
            Command::EstimateK => ExperimentKind::EstimateK,
            Command::GraphMc => ExperimentKind::GraphMc,
            Command::SdeMc => ExperimentKind::SdeMc,
            Command::EpsSweep => ExperimentKind::EpsSweep,
            Command::Speed => ExperimentKind::Speed,
            Command::OracleCompare => ExperimentKind::OracleCompare,
            Command::Run => return None,
        })
    }
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match (&cli.config, cli.command.kind()) {
        (Some(path), kind) => {
            let mut c = ExperimentConfig::load(path)?;
            if let Some(k) = kind {
                c.kind = k;
            }
            c
        }
        (None, Some(kind)) => ExperimentConfig::new(kind),
        (None, None) => return Err(Error::Config("`run` needs --config".into())),
    };
    cfg.apply_env_seed()?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = build_config(&cli).and_then(|cfg| run_config(&cfg));
    match result {
        Ok(outcome) => {
            println!("{:#}", outcome.summary);
            eprintln!("artifacts written to {}", outcome.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
