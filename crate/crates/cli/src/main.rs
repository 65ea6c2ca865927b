use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(gaugekit_cli::run(std::env::args_os()))
}
