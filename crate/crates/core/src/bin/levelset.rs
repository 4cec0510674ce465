use clap::Parser;
use levelset::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
