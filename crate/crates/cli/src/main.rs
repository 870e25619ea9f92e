use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(lamelab::run(std::env::args_os()))
}
