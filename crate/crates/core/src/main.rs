use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};
use moodseq::cli::{self, Cli, RunConfig};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MOODSEQ_LOG", "info"))
        .format_timestamp(None)
        .init();
    let help = format!("Config keys (key = default):\n{}", RunConfig::describe_defaults());
    let matches = Cli::command().after_long_help(help).get_matches();
    let parsed = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let result = parsed.resolve().and_then(|cfg| {
        if cfg.threads > 0 {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global() {
                log::warn!("could not size the thread pool: {e}");
            }
        }
        cli::warn_unused(&parsed.command, &cfg);
        cli::run(&parsed.command, &cfg)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
