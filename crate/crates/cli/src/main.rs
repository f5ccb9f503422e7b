use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stefan_cli::commands::{
    self, BarrierArgs, CertifyArgs, ConvergenceArgs, ForwardArgs, RepresentArgs,
};
use stefan_cli::config::KEYS_HELP;

/// Two-phase Stefan solver and duality certificate harness.
///
/// Exit codes: 0 = all checks passed, 1 = a numeric check failed,
/// 2 = configuration or runtime error.
#[derive(Parser)]
#[command(name = "stefan", version, after_long_help = KEYS_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve forward from the configured measure; writes CSV slices, a ledger and a manifest
    #[command(after_long_help = KEYS_HELP)]
    Forward(ForwardArgs),
    /// Barrier flux against its envelope on (0, T]
    BarrierTable(BarrierArgs),
    /// Green identity terms and residuals for the built-in test functions
    RepresentCheck(RepresentArgs),
    /// Certificate bounding |∫(u - v)(t0) Θ| for two runs
    DualCertify(CertifyArgs),
    /// Resolution sweep with a fitted convergence order
    #[command(after_long_help = KEYS_HELP)]
    Convergence(ConvergenceArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Forward(a) => commands::forward(a),
        Command::BarrierTable(a) => commands::barrier_table(a),
        Command::RepresentCheck(a) => commands::represent_check(a),
        Command::DualCertify(a) => commands::dual_certify(a),
        Command::Convergence(a) => commands::convergence(a),
    };
    match result {
        Ok(status) => ExitCode::from(status.code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
