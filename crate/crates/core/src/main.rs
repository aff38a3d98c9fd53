use std::process::ExitCode;

fn main() -> ExitCode {
    canens::cli::run(std::env::args_os())
}
