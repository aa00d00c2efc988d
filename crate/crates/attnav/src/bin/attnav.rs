use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(attnav::cli::run(std::env::args_os()) as u8)
}
