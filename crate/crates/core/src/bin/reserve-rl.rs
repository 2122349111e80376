use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use reserve_rl::cli;
use reserve_rl::config::RunConfig;
use reserve_rl::{Error, Result};

#[derive(Parser)]
#[command(name = "reserve-rl", version, about = "Risk-sensitive reinforcement learning for loss reserving")]
struct Args {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Comma-separated seeds, overriding the config.
    #[arg(long, global = true, value_delimiter = ',')]
    seed_list: Option<Vec<u64>>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize, split and estimate development factors.
    Ingest,
    /// Train one policy per seed over the regime curriculum.
    Train {
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Curriculum levels; `0,1` gives the cold-regime schedule.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<u8>>,
    },
    /// Regime-stratified evaluation against the static baselines.
    Evaluate {
        #[arg(long, value_delimiter = ',')]
        regimes: Option<Vec<u8>>,
    },
    /// Fixed-shock stress test.
    Stress {
        #[arg(long, value_delimiter = ',')]
        shocks: Option<Vec<f64>>,
    },
    /// Reserve tables and stochastic evaluation of the classical methods.
    Baselines,
    /// Confidence-level and solvency-floor sweep.
    Sensitivity,
    /// Collect finished suites into a summary.
    Report,
}

fn load_config(args: &Args) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seeds) = &args.seed_list {
        cfg.seeds = seeds.clone();
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(out) = &args.out {
        let cwd = std::env::current_dir().map_err(|e| Error::io(".", e))?;
        cfg.out_dir = cwd.join(out);
    }
    match &args.command {
        Some(Command::Train { seeds, levels }) => {
            if let Some(s) = seeds {
                cfg.seeds = s.clone();
            }
            if let Some(l) = levels {
                cfg.curriculum.levels = l.clone();
            }
        }
        Some(Command::Evaluate { regimes: Some(r) }) => cfg.eval.levels = r.clone(),
        Some(Command::Stress { shocks: Some(s) }) => cfg.eval.shocks = s.clone(),
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: Args) -> Result<()> {
    if args.command.is_none() && !args.print_config {
        return Err(Error::Usage("no command given; see --help".into()));
    }
    let cfg = load_config(&args)?;
    let Some(command) = args.command.as_ref().filter(|_| !args.print_config) else {
        print!("{}", cfg.to_toml());
        return Ok(());
    };
    let manifest = match command {
        Command::Ingest => cli::cmd_ingest(&cfg)?,
        Command::Train { .. } => cli::cmd_train(&cfg)?,
        Command::Evaluate { .. } => cli::cmd_evaluate(&cfg)?,
        Command::Stress { .. } => cli::cmd_stress(&cfg)?,
        Command::Baselines => cli::cmd_baselines(&cfg)?,
        Command::Sensitivity => cli::cmd_sensitivity(&cfg)?,
        Command::Report => cli::cmd_report(&cfg)?,
    };
    for name in manifest.outputs.keys() {
        println!("{name}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RESERVE_RL_LOG", "warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
