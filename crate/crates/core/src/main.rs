use clap::Parser;
use wlaplace::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let code = run(&cli.command, &mut std::io::stdout());
    std::process::exit(code);
}
