use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use harnack_cli::{run_cli, Command};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    ValidatePhi,
    PucciSelftest,
    Regions,
    StackDemo,
    BarrierVerify,
    Evolve,
    EnvelopeDemo,
    MeasureCheck,
    Leps,
    HarnackSweep,
    Counterexample,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::ValidatePhi => Command::ValidatePhi,
            Cmd::PucciSelftest => Command::PucciSelftest,
            Cmd::Regions => Command::Regions,
            Cmd::StackDemo => Command::StackDemo,
            Cmd::BarrierVerify => Command::BarrierVerify,
            Cmd::Evolve => Command::Evolve,
            Cmd::EnvelopeDemo => Command::EnvelopeDemo,
            Cmd::MeasureCheck => Command::MeasureCheck,
            Cmd::Leps => Command::Leps,
            Cmd::HarnackSweep => Command::HarnackSweep,
            Cmd::Counterexample => Command::Counterexample,
        }
    }
}

/// Numerical laboratory for intrinsic Harnack inequalities.
#[derive(Debug, Parser)]
#[command(name = "harnack-lab", version)]
struct Args {
    /// Pipeline to run.
    #[arg(value_enum)]
    command: Cmd,
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for artifacts and the manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for all randomized sampling; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Config override `path.to.key=value` (JSON value or bare string).
    #[arg(long = "set", value_name = "K=V")]
    set: Vec<String>,
}

fn main() {
    let args = Args::parse();
    let command = Command::from(args.command);
    let code = run_cli(command.name(), args.config.as_deref(), &args.set, args.seed, &args.out);
    std::process::exit(code);
}
