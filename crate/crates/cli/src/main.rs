mod args;
mod manifest;
mod run;

use clap::Parser;

use args::{Cli, Command};
use run::CliError;

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Fit(a) => run::cmd_fit(a),
        Command::Simulate(a) => run::cmd_simulate(a),
        Command::Diagnose(a) => run::cmd_diagnose(a),
        Command::OracleCheck(a) => run::cmd_oracle_check(a),
        Command::Rerun(a) => run::cmd_rerun(a),
    }
}

fn main() {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
