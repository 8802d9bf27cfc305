//! `geocontrol`: batch front end for the PMP solvers, reduction,
//! reconstruction and Dirac checks.
//!
//! Every command prints human-readable lines followed by a final
//! `RESULT {json}` line. Exit codes: 0 success, 1 input error, 2 numerical
//! failure.

mod args;
mod checks;
mod geometry;
mod report;
mod solve;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use report::{error_summary, result_line, CliError, Summary};

#[derive(Parser, Debug)]
#[command(name = "geocontrol", version, about = "Presymplectic PMP, Lie-Poisson reduction and Dirac checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the full Pontryagin system with feedback control elimination.
    SolvePmp(solve::SolvePmpArgs),
    /// Integrate the reduced (Lie-Poisson) system.
    SolveReduced(solve::SolveReducedArgs),
    /// Rebuild the group curve of a reduced trajectory.
    Reconstruct(geometry::ReconstructArgs),
    /// Dirac membership checks and the random-form self-test.
    CheckDirac(checks::CheckDiracArgs),
    /// Compare a projected full trajectory with a reduced one.
    Compare(checks::CompareArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SolvePmp(_) => "solve-pmp",
            Command::SolveReduced(_) => "solve-reduced",
            Command::Reconstruct(_) => "reconstruct",
            Command::CheckDirac(_) => "check-dirac",
            Command::Compare(_) => "compare",
        }
    }
}

fn run(cmd: &Command, summary: &mut Summary) -> Result<(), CliError> {
    match cmd {
        Command::SolvePmp(a) => solve::solve_pmp(a, summary),
        Command::SolveReduced(a) => solve::solve_reduced(a, summary),
        Command::Reconstruct(a) => geometry::reconstruct(a, summary),
        Command::CheckDirac(a) => checks::check_dirac(a, summary),
        Command::Compare(a) => checks::compare(a, summary),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                std::process::exit(0);
            }
            let _ = e.print();
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            let err = CliError::Input(first.trim_start_matches("error: ").to_string());
            println!("{}", result_line(error_summary("usage", &err), "error", 1));
            std::process::exit(1);
        }
    };
    let name = cli.command.name();
    let mut summary = Summary::new(name);
    let code = match run(&cli.command, &mut summary) {
        Ok(()) => {
            println!("{}", result_line(summary.into_value(), "ok", 0));
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.exit_code();
            summary.fail(&e);
            println!("{}", result_line(summary.into_value(), "error", code));
            code
        }
    };
    std::process::exit(code);
}
