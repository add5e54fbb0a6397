use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kinetic_qsd::model::catalog::{domain_catalog, model_catalog, CatalogEntry};
use kqsd::{run_file, RunOptions};

#[derive(Parser)]
#[command(name = "kqsd", version, about = "Quasi-stationary distributions of kinetic diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Override the master seed (TOML integers are signed, so at most 2^63 - 1).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    seed: Option<u64>,
    /// Cap the number of worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config or a manifest.json.
    Run { config: PathBuf },
    /// List the built-in models and domains.
    Catalog,
}

fn print_entries(title: &str, entries: &[CatalogEntry]) {
    println!("{title}:");
    for e in entries {
        println!("  {}: {}", e.name, e.description);
        for (p, meaning) in &e.parameters {
            println!("      {p}: {meaning}");
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match cli.command {
        Command::Catalog => {
            print_entries("models", &model_catalog());
            println!();
            print_entries("domains", &domain_catalog());
            ExitCode::SUCCESS
        }
        Command::Run { config } => {
            let opts = RunOptions {
                output_dir: cli.output_dir,
                seed: cli.seed,
                verbose: cli.verbose,
            };
            match run_file(&config, &opts) {
                Ok(v) => ExitCode::from(v.exit_code() as u8),
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
