use clap::Parser;
use harmonic_cli::{run, Cli, SEED_ENV};

fn main() {
    let cli = Cli::parse();
    let env_seed = std::env::var(SEED_ENV).ok();
    std::process::exit(run(&cli.command, env_seed.as_deref()));
}
