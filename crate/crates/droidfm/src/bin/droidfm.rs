use clap::Parser;

use droidfm::cli::{self, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(err) = cli::run(cli) {
        eprintln!("droidfm: error[{}]: {err}", err.kind());
        std::process::exit(err.exit_code());
    }
}
