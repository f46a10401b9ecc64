use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(tsc_lab::cli::main_with(std::env::args_os()))
}
