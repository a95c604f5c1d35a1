use clap::Parser;
use drl::harness::cli;

fn main() {
    let args = cli::Cli::parse();
    std::process::exit(cli::execute(args));
}
