//! `symmpca`: integrate learning rules, verify fixed points, classify
//! critical points and run the lemma suite from a JSON config.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Failure;

#[derive(Parser)]
#[command(name = "symmpca", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads for parallel trials (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model seed; overrides SYMMPCA_SEED and the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate every configured rule from every configured seed.
    Run(Common),
    /// Construct fixed points of each case and report residuals.
    VerifyFixedPoints {
        #[command(flatten)]
        common: Common,
        /// Residual tolerance; overrides the config.
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Classify eigenbasis and Hadamard-mixed fixed points.
    Classify(Common),
    /// Randomized checks of the supporting matrix identities.
    LemmaCheck {
        /// Trials per lemma.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Base seed; overrides SYMMPCA_SEED.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for lemmas.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn prepare(common: &Common) -> Result<config::Validated, Failure> {
    let mut cfg = config::load(&common.config)?;
    let env = std::env::var(config::SEED_ENV).ok();
    config::apply_seed_override(&mut cfg, common.seed, env.as_deref())?;
    Ok(config::validate(cfg)?)
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run(common) => {
            let v = prepare(&common)?;
            let out = commands::output_dir(common.out, &v).unwrap_or_else(|| PathBuf::from("symmpca-out"));
            commands::run(&v, &out)
        }
        Command::VerifyFixedPoints { common, tolerance } => {
            if tolerance.is_some_and(|t| !(t > 0.0)) {
                return Err(Failure::Config(anyhow::anyhow!("--tolerance must be positive")));
            }
            let v = prepare(&common)?;
            let out = commands::output_dir(common.out, &v);
            commands::verify_fixed_points(&v, tolerance, out.as_deref())
        }
        Command::Classify(common) => {
            let v = prepare(&common)?;
            let out = commands::output_dir(common.out, &v);
            commands::classify_cmd(&v, out.as_deref())
        }
        Command::LemmaCheck { trials, seed, out } => {
            let mut cfg_seed = 0;
            if let Some(s) = seed {
                cfg_seed = s;
            } else if let Ok(raw) = std::env::var(config::SEED_ENV) {
                cfg_seed = raw.trim().parse().map_err(|_| {
                    Failure::Config(anyhow::anyhow!("{} must be an unsigned integer, got `{raw}`", config::SEED_ENV))
                })?;
            }
            commands::lemma_check(cfg_seed, trials, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
