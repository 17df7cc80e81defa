use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "qsdlab", version, about = "Run configured QSD / front-selection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment in CONFIG (TOML, or a previous run's manifest.json).
    Run {
        config: PathBuf,
        /// Output directory; created if missing.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Cmd::Run { config, out } => match qsdlab_cli::run(&config, &out) {
            Ok(manifest) => {
                for c in &manifest.checks {
                    println!("{} {}: {} (target {}, tol {})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.target, c.tolerance);
                }
                println!("wrote {} files to {}", manifest.files.len() + 1, out.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(qsdlab_cli::exit_code(&e) as u8)
            }
        },
    }
}
