use clap::Parser;
use copula_choice::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
