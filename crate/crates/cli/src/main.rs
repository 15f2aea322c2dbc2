use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lsmc_pde_cli::config::RunConfig;
use lsmc_pde_cli::error::CliError;
use lsmc_pde_cli::run::{self, Context};

/// Bermudan option pricing with the hybrid LSMC / Fourier-PDE method and its
/// baselines.
#[derive(Parser)]
#[command(name = "lsmc-pde", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Price the option over the configured number of trials and write a
    /// summary JSON.
    Price(RunArgs),
    /// Write exercise-boundary CSVs (and coefficient CSVs for the hybrid).
    Boundary(RunArgs),
    /// Run the multilevel bias/variance/cost study.
    LevelTest(RunArgs),
    /// Render a comparison table from the summaries in a directory.
    Report {
        /// Directory holding summary JSON files.
        dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (flat `key = value` file).
    #[arg(long)]
    config: PathBuf,
    /// Base seed; trial `k` uses `seed + k`.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl RunArgs {
    fn context(&self) -> Result<(Context, RunConfig), CliError> {
        let cfg = RunConfig::load(&self.config)?;
        if let Some(n) = self.threads {
            if n == 0 {
                return Err(CliError::Schema { field: "--threads".into(), reason: "must be at least 1".into() });
            }
            // only fails if the pool was already built, which cannot happen here
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        let ctx = Context {
            config_path: self.config.clone(),
            seed: self.seed,
            threads: rayon::current_num_threads(),
            out: self.out.clone(),
        };
        Ok((ctx, cfg))
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Price(args) => {
            let (ctx, cfg) = args.context()?;
            let summary = run::price(&ctx, &cfg)?;
            println!("{}", summary.headline());
        }
        Command::Boundary(args) => {
            let (ctx, cfg) = args.context()?;
            for path in run::boundary(&ctx, &cfg)? {
                println!("wrote {}", path.display());
            }
        }
        Command::LevelTest(args) => {
            let (ctx, cfg) = args.context()?;
            let r = run::level_test_cmd(&ctx, &cfg)?;
            let fmt = |f: Option<lsmc_pde::mlmc::SlopeFit>| {
                f.map_or("n/a".to_string(), |f| format!("{:.2} (R² {:.3})", f.slope, f.r_squared))
            };
            println!("alpha {}, beta {}, gamma {:.2}", fmt(r.alpha), fmt(r.beta), r.gamma.slope);
        }
        Command::Report { dir } => print!("{}", run::report(&dir)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
