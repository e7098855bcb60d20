use clap::Parser;
use gpo_abc_cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error [{}]: {e}", e.code());
        std::process::exit(1);
    }
}
