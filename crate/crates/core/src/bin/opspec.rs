use clap::Parser;
use opspec::cli::{self, Cli, ExitStatus};
use std::process::ExitCode;

fn main() -> ExitCode {
    let args = Cli::parse();
    let mut stderr = std::io::stderr();
    if let Err(e) = cli::configure_threads(std::env::var("OPSPEC_THREADS").ok().as_deref()) {
        eprintln!("error: {e}");
        return ExitCode::from(ExitStatus::Validation.code() as u8);
    }
    let status = cli::run(&args, &mut std::io::stdout().lock(), &mut stderr);
    ExitCode::from(status.code() as u8)
}
