use std::process::ExitCode;

use clap::Parser;
use hera_cli::args::Cli;
use hera_cli::settings::expand_dotted_flags;
use hera_cli::Completion;
use tracing_subscriber::EnvFilter;

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse_from(expand_dotted_flags(std::env::args()));
    init_logging(cli.verbose);
    match hera_cli::run(cli) {
        Ok(Completion::Ok) => ExitCode::SUCCESS,
        Ok(Completion::DocumentsFailed(failures)) => {
            let summary = serde_json::json!({
                "error": "documents_failed",
                "failed": failures.len(),
                "failures": failures,
            });
            eprintln!("{summary}");
            ExitCode::from(1)
        }
        Ok(Completion::CorruptCache(n)) => {
            eprintln!("{}", serde_json::json!({ "error": "corrupt_cache", "corrupt": n }));
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(2)
        }
    }
}
