use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(cluster_contrast::cli::main_with_args(std::env::args_os()))
}
