use clap::Parser;

fn main() {
    std::process::exit(noacim::cli::main_with(noacim::cli::Cli::parse()));
}
