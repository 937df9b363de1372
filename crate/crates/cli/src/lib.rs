//! The `kgacc` command line.
//!
//! Exit codes: 0 success, 2 configuration, 3 input, 4 evaluation, 5 output
//! or network. Every report file embeds the resolved run config and seed.

pub mod args;
pub mod commands;
pub mod error;
pub mod inputs;

use args::{Cli, Command};
use commands::Ctx;
pub use error::{Class, CliError, CliResult};

pub fn run(cli: &Cli, argv: Vec<String>) -> CliResult<()> {
    let ctx = Ctx { out: cli.out.clone(), argv };
    match &cli.command {
        Command::Ingest(a) => commands::ingest(&ctx, a),
        Command::GenLabels(a) => commands::gen_labels(&ctx, a),
        Command::Evaluate(a) => commands::evaluate(&ctx, a),
        Command::Evolve(a) => commands::evolve(&ctx, a),
        Command::FitCost(a) => commands::fit_cost(&ctx, a),
        Command::OptimalM(a) => commands::optimal_m_cmd(&ctx, a),
        Command::Simulate(a) => commands::simulate(&ctx, a),
        Command::Serve(a) => commands::serve(a),
    }
}
