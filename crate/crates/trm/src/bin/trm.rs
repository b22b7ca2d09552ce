use std::process::ExitCode;

fn main() -> ExitCode {
    trm::cli::main()
}
