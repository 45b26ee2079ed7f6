use clap::Parser;

fn main() {
    std::process::exit(hyperphg_cli::main_with(hyperphg_cli::Cli::parse()));
}
