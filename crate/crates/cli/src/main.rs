//! `exchain`: runs the billiard chain and stochastic energy exchange
//! experiments from a TOML config and writes replayable run directories.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CliError, Experiment};
use config::{Config, Overrides};

#[derive(Parser)]
#[command(name = "exchain", version, about = "Billiard chain and stochastic energy exchange experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML config; unspecified keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set see.n=4` or `--set billiard-rate.grid=[0.01,0.1]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// Run directory (default `runs/<subcommand>`).
    #[arg(long)]
    out: Option<String>,
    /// Print the resolved config and exit without simulating.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct ReplayArgs {
    /// Run directory written by an earlier subcommand.
    #[arg(long)]
    run: PathBuf,
    /// Replica index within the stage.
    #[arg(long)]
    index: u64,
    /// Stage name from the manifest (default: the first stage).
    #[arg(long)]
    stage: Option<String>,
    /// Replay under a different master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// SEE passage-time tail into the reference set.
    SeeTail(RunArgs),
    /// Ensemble-mean SEE site energies over time.
    SeeSimulate(RunArgs),
    /// Relaxed SEE ensemble: site means and energy density.
    SeeInvariant(RunArgs),
    /// Passage-time tail constant while one site energy varies.
    SeeGammaScan(RunArgs),
    /// First cross-collision time distributions.
    BilliardCollisionTime(RunArgs),
    /// First-collision rate against the smaller cell energy.
    BilliardRate(RunArgs),
    /// Rescaled return times along a closed trajectory.
    BilliardLambda(RunArgs),
    /// Energy fraction of the colliding disk.
    BilliardParticipation(RunArgs),
    /// Post-collision disk energy against the angular oracle.
    BilliardPostcollision(RunArgs),
    /// Post-collision cell energy near zero, billiard and exchange rule.
    BilliardCelltail(RunArgs),
    /// Mean first-collision energy transfer.
    BilliardFlux(RunArgs),
    /// Billiard passage time from a low-energy cell.
    BilliardPassage(RunArgs),
    /// Driven-chain conductivity against length.
    Conductivity(RunArgs),
    /// Tail estimators on samples from known laws.
    CalibrateEstimators(RunArgs),
    /// Recompute one replica of a finished run and check its digest.
    Replay(ReplayArgs),
}

fn experiment(command: &Command) -> Option<(Experiment, &RunArgs)> {
    let pair = match command {
        Command::SeeTail(a) => (Experiment::SeeTail, a),
        Command::SeeSimulate(a) => (Experiment::SeeSimulate, a),
        Command::SeeInvariant(a) => (Experiment::SeeInvariant, a),
        Command::SeeGammaScan(a) => (Experiment::SeeGammaScan, a),
        Command::BilliardCollisionTime(a) => (Experiment::BilliardCollisionTime, a),
        Command::BilliardRate(a) => (Experiment::BilliardRate, a),
        Command::BilliardLambda(a) => (Experiment::BilliardLambda, a),
        Command::BilliardParticipation(a) => (Experiment::BilliardParticipation, a),
        Command::BilliardPostcollision(a) => (Experiment::BilliardPostcollision, a),
        Command::BilliardCelltail(a) => (Experiment::BilliardCelltail, a),
        Command::BilliardFlux(a) => (Experiment::BilliardFlux, a),
        Command::BilliardPassage(a) => (Experiment::BilliardPassage, a),
        Command::Conductivity(a) => (Experiment::Conductivity, a),
        Command::CalibrateEstimators(a) => (Experiment::CalibrateEstimators, a),
        Command::Replay(_) => return None,
    };
    Some(pair)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Command::Replay(r) = &cli.command {
        let value = commands::replay(&r.run, r.index, r.stage.as_deref(), r.seed)?;
        println!("{}", serde_json::to_string_pretty(&value).expect("JSON value"));
        eprintln!("replica digest matches the manifest");
        return Ok(());
    }
    let (experiment, args) = experiment(&cli.command).expect("run subcommand");
    let overrides = Overrides { sets: args.set.clone(), seed: args.seed, workers: args.workers, out: args.out.clone() };
    let cfg = Config::resolve(args.config.as_deref(), &overrides, |k| std::env::var(k).ok())?;
    if args.dry_run {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let (dir, results) = commands::run(experiment, &cfg)?;
    println!("{}", serde_json::to_string_pretty(&results).expect("JSON value"));
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
