use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use infocost_cli::{run, Cli, EXIT_VALIDATION};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("invalid input: {e}");
            return ExitCode::from(EXIT_VALIDATION as u8);
        }
    }
    let outcome = run(&cli);
    if let Some(msg) = &outcome.diagnostic {
        eprintln!("{msg}");
    }
    if let Some(doc) = &outcome.document {
        let written = match &cli.out {
            Some(path) => std::fs::write(path, doc),
            None => std::io::stdout().write_all(doc.as_bytes()),
        };
        if let Err(e) = written {
            eprintln!("cannot write result: {e}");
            return ExitCode::from(EXIT_VALIDATION as u8);
        }
    }
    if let (Some(path), Some(csv)) = (&cli.csv, &outcome.csv) {
        if let Err(e) = std::fs::write(path, csv) {
            eprintln!("cannot write {}: {e}", path.display());
            return ExitCode::from(EXIT_VALIDATION as u8);
        }
    }
    ExitCode::from(outcome.code as u8)
}
