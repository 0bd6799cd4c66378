use std::process::ExitCode;

fn main() -> ExitCode {
    mvem::cli::main_with_args(std::env::args_os())
}
