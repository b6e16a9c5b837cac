//! One pipeline per subcommand.

mod algebra;
mod harnack;
mod solver;

use anyhow::Result;

use crate::{Command, RunConfig, RunOutput};

pub fn dispatch(command: Command, cfg: &RunConfig) -> Result<RunOutput> {
    match command {
        Command::ValidatePhi => algebra::validate_phi(cfg),
        Command::PucciSelftest => algebra::pucci_selftest(cfg),
        Command::Regions => algebra::regions(cfg),
        Command::StackDemo => algebra::stack_demo(cfg),
        Command::BarrierVerify => algebra::barrier_verify(cfg),
        Command::Evolve => solver::evolve(cfg),
        Command::EnvelopeDemo => solver::envelope_demo(cfg),
        Command::MeasureCheck => harnack::measure_check(cfg),
        Command::Leps => harnack::leps(cfg),
        Command::HarnackSweep => harnack::harnack_sweep(cfg),
        Command::Counterexample => harnack::counterexample(cfg),
    }
}

/// `header` followed by `rows`, each joined by commas, LF line endings.
pub(crate) fn csv(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}
