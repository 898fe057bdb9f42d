//! Experiment driver: snapshot generation, offline basis construction,
//! coupled runs and reporting, plus the built-in self checks.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rompart::config::ExperimentConfig;
use rompart::{driver, verify, Error, Result};

#[derive(Parser, Debug)]
#[command(name = "rompart", version, about = "Partitioned FOM/ROM coupling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Experiment config TOML. Overrides --profile.
    #[arg(long, conflicts_with = "profile")]
    config: Option<PathBuf>,

    /// Built-in profile, `desk` or `paper`.
    #[arg(long, default_value = "desk")]
    profile: String,

    /// Directory for snapshots, modes and results.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the training problems and store their trajectories.
    Snapshots(CommonArgs),

    /// Build the interface and interior mode hierarchies from snapshots.
    Offline(CommonArgs),

    /// Integrate the coupled formulations and tabulate errors.
    Run {
        #[command(flatten)]
        common: CommonArgs,

        /// Worker threads for the sweep; defaults to all cores.
        #[arg(long)]
        jobs: Option<usize>,
    },

    /// Snapshots, offline and run in sequence.
    Pipeline {
        #[command(flatten)]
        common: CommonArgs,

        /// Worker threads for the sweep; defaults to all cores.
        #[arg(long)]
        jobs: Option<usize>,
    },

    /// Print the summary of a finished run as a table.
    Report {
        /// Directory holding `runs/summary.csv`.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },

    /// Print the resolved config as TOML.
    Config(CommonArgs),

    /// Run the numerical self checks.
    Verify {
        /// Seed for the randomized checks.
        #[arg(long, default_value_t = 1)]
        seed: u64,

        /// Repetitions of the randomized checks.
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let cfg = match &common.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => match common.profile.as_str() {
            "desk" => ExperimentConfig::desk(),
            "paper" => ExperimentConfig::paper(),
            other => {
                return Err(Error::Config(format!(
                    "unknown profile {other:?}, expected desk or paper"
                )))
            }
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Snapshots(common) => {
            let cfg = load_config(&common)?;
            driver::cmd_snapshots(&cfg, &common.out)?;
        }
        Command::Offline(common) => {
            let cfg = load_config(&common)?;
            driver::cmd_offline(&cfg, &common.out)?;
        }
        Command::Run { common, jobs } => {
            let cfg = load_config(&common)?;
            driver::cmd_run(&cfg, &common.out, jobs)?;
            driver::cmd_report(&common.out)?;
        }
        Command::Pipeline { common, jobs } => {
            let cfg = load_config(&common)?;
            driver::cmd_snapshots(&cfg, &common.out)?;
            driver::cmd_offline(&cfg, &common.out)?;
            driver::cmd_run(&cfg, &common.out, jobs)?;
            driver::cmd_report(&common.out)?;
        }
        Command::Report { out } => {
            driver::cmd_report(&out)?;
        }
        Command::Config(common) => {
            let cfg = load_config(&common)?;
            print!("{}", cfg.to_toml_string());
            eprintln!("# config hash {}", cfg.hash());
        }
        Command::Verify { seed, trials } => {
            let results = verify::run_battery(seed, trials);
            for r in &results {
                let tag = if r.passed { "PASS" } else { "FAIL" };
                println!("{tag} {:<24} {}", r.name, r.detail);
            }
            if !verify::all_passed(&results) {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
