use std::process::ExitCode;

use clap::Parser;
use navex_cli::{cmd_battery, cmd_explain, cmd_serve, cmd_summarize, Cli, CliError, Command};

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Explain(args) => {
            let report = cmd_explain(&args)?;
            eprintln!("navex: wrote {} maps and {} texts to {}", report.maps, report.texts, report.out.display());
        }
        Command::Battery(args) => {
            for id in cmd_battery(&args)? {
                println!("{id}");
            }
        }
        Command::Serve(args) => cmd_serve(&args)?,
        Command::Summarize(args) => print!("{}", cmd_summarize(&args)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("navex: error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
