use clap::Parser;

use novikov_atlas_cli::{build_config, run, Cli, WORKERS_ENV};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (mode, opts) = Cli::parse().command.split();
    let env_workers = std::env::var(WORKERS_ENV).ok();
    let outcome = build_config(mode, opts, env_workers.as_deref()).and_then(|c| run(&c));
    match outcome {
        Ok(summary) => {
            for line in &summary.lines {
                println!("{line}");
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
