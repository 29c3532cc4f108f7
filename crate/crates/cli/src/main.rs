use clap::Parser;
use pcatdyn::commands::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(msg) => print!("{msg}"),
        Err(e) => {
            eprintln!("pcatdyn: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
