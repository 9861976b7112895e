//! Command-line front end: runs model-fitting scripts and generates the
//! e-health benchmark data set. All heavy lifting lives in the library; this
//! binary only maps flags onto [`dagmcmc::script`] and [`dagmcmc::fixtures`].

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dagmcmc::fixtures::{generate_ehealth, EhealthConfig};
use dagmcmc::script::{run_script, ScriptOptions};

/// Environment variable giving the default total core count; a script's
/// `modelDistribute(n)` overrides it.
const CORES_VAR: &str = "DAGMCMC_CORES";

#[derive(Parser)]
#[command(
    name = "dagmcmc",
    about = "Parallel MCMC for DAG models driven by script files",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a script of model commands (modelCheck, modelUpdate, ...).
    Run(RunArgs),
    /// Write a synthetic e-health data set with known ground truth.
    GenEhealth(GenArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Script file; paths inside it are relative to its directory.
    #[arg(long)]
    script: PathBuf,
    /// Master seed (a `seed(n)` command in the script overrides it).
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Default total core count (overridable by `modelDistribute`); falls
    /// back to the DAGMCMC_CORES environment variable, then to one core per
    /// chain.
    #[arg(long)]
    cores: Option<usize>,
    /// Chain count used when `modelCompile` is called without one.
    #[arg(long, default_value_t = 1)]
    chains: usize,
    /// Directory for artifacts (stats.txt, samples.csv, schedule dumps).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 200)]
    persons: usize,
    #[arg(long, default_value_t = 8)]
    regions: usize,
    #[arg(long, default_value_t = 5000)]
    prescriptions: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory the model/data/inits/truth files are written into.
    #[arg(long)]
    out_dir: PathBuf,
}

fn cores_from_env() -> Result<Option<usize>, String> {
    match std::env::var(CORES_VAR) {
        Ok(text) => text
            .parse::<usize>()
            .map(Some)
            .map_err(|_| format!("{} must be a core count, not `{}`", CORES_VAR, text)),
        Err(_) => Ok(None),
    }
}

fn run(args: &RunArgs) -> Result<(), String> {
    let default_cores = match args.cores {
        Some(n) => Some(n),
        None => cores_from_env()?,
    };
    let opts = ScriptOptions {
        seed: args.seed,
        default_cores,
        default_chains: args.chains,
        out_dir: args.out_dir.clone(),
    };
    let mut stdout = std::io::stdout();
    run_script(&args.script, &opts, &mut stdout).map_err(|e| e.to_string())
}

fn generate(args: &GenArgs) -> Result<(), String> {
    let config = EhealthConfig {
        persons: args.persons,
        regions: args.regions,
        prescriptions: args.prescriptions,
        seed: args.seed,
    };
    let fixture = generate_ehealth(&config, &args.out_dir).map_err(|e| e.to_string())?;
    println!(
        "wrote {} indexed and {} nonindexed observations to {} (person {} has {})",
        fixture.indexed,
        fixture.nonindexed,
        args.out_dir.display(),
        fixture.dominant_person,
        fixture.dominant_observations,
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::GenEhealth(args) => generate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {}", message);
            ExitCode::FAILURE
        }
    }
}
