//! Command-line front end. `DERL_WORKERS` sets the size of the worker pool.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use derl::arb::{reachability_coefficient, ReachabilityMethod};
use derl::hard::{build_hard_mdp, enumerate_family_deterministic, save_manifest};
use derl::harness::{error_exit_code, exit_code, run_experiment, ExperimentConfig};
use derl::lemma::{run_fuzz_suite, FuzzConfig};
use derl::mdp::LinearMdpInstance;
use derl::{DerlError, Result};

#[derive(Parser)]
#[command(name = "derl", version, about = "Deployment-efficient exploration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Run { config: PathBuf },
    /// Fuzz the matrix lemmas and print a JSON report.
    FuzzLemmas {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trials for each of the bridge, perturbation and elliptical checks.
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 1_000)]
        batched_trials: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the hard family for (d, H, epsilon): a manifest plus one instance file per member.
    GenHard {
        #[arg(long)]
        d: usize,
        #[arg(long = "H")]
        horizon: usize,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reachability coefficient of a serialized instance.
    Reachability {
        instance: PathBuf,
        /// Use the eigenvalue lower bound instead of the sphere search.
        #[arg(long)]
        svd: bool,
        #[arg(long, default_value_t = 10_000)]
        cap: usize,
    },
}

fn configure_pool() -> Result<()> {
    if let Ok(v) = std::env::var("DERL_WORKERS") {
        let n: usize = v
            .parse()
            .map_err(|_| DerlError::Config(format!("DERL_WORKERS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| DerlError::Config(e.to_string()))?;
    }
    Ok(())
}

fn emit(json: String, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, json)?,
        None => println!("{json}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<i32> {
    configure_pool()?;
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_experiment(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report.aggregate)?);
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            Ok(report.exit_code())
        }
        Command::FuzzLemmas { seed, trials, batched_trials, out } => {
            let cfg = FuzzConfig {
                seed,
                bridge_trials: trials,
                perturbation_trials: trials,
                elliptical_trials: trials,
                batched_trials,
                ..FuzzConfig::default()
            };
            let suite = run_fuzz_suite(&cfg)?;
            emit(serde_json::to_string_pretty(&suite)?, out.as_ref())?;
            Ok(if suite.failures() == 0 { exit_code::SUCCESS } else { exit_code::INVARIANT })
        }
        Command::GenHard { d, horizon, epsilon, out } => {
            let family = enumerate_family_deterministic(d, horizon, epsilon)?;
            std::fs::create_dir_all(&out)?;
            save_manifest(&family, out.join("manifest.json"))?;
            for (j, spec) in family.iter().enumerate() {
                build_hard_mdp(spec)?.save_json(out.join(format!("instance_{j}.json")))?;
            }
            println!("wrote {} instances to {}", family.len(), out.display());
            Ok(exit_code::SUCCESS)
        }
        Command::Reachability { instance, svd, cap } => {
            let inst = LinearMdpInstance::load_json(&instance)?;
            let method = if svd { ReachabilityMethod::SvdLowerBound } else { ReachabilityMethod::BruteForce };
            let report = reachability_coefficient(&inst, method, cap)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(exit_code::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_exit_code(&e) as u8)
        }
    }
}
