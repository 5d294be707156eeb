use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = rclm::cli::Cli::parse();
    match rclm::cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
