use std::process::ExitCode;

fn main() -> ExitCode {
    qrecord::cli::main_with_args(std::env::args_os())
}
