use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = memheat::cli::Cli::parse();
    match memheat::cli::run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
