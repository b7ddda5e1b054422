use clap::Parser;

fn main() -> std::process::ExitCode {
    granula_cli::run(granula_cli::Cli::parse())
}
