use clap::Parser;
use impedscope::cli::{run, Cli};
use impedscope::error::exit_code;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(exit_code(&e));
    }
}
