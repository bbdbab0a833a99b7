use clap::Parser;
use sscov_cli::commands::{run, Cli};
use sscov_cli::error::EXIT_OK;

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
