use std::process::ExitCode;

fn main() -> ExitCode {
    switchembed::cli::main_with(std::env::args_os())
}
