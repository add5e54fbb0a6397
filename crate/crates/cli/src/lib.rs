//! Config-driven experiment runner: one experiment per invocation, artifacts
//! written to an output directory together with a manifest that reproduces
//! them.

pub mod artifacts;
pub mod config;
pub mod experiments;

use std::path::{Path, PathBuf};
use std::time::Instant;

use kinetic_qsd::diagnostics::Verdict;
use serde::Serialize;

use artifacts::Output;
use config::ExperimentConfig;

pub const DEFAULT_OUTPUT_DIR: &str = "kqsd-out";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub verbose: bool,
}

#[derive(Serialize)]
struct Manifest<'a> {
    engine: &'static str,
    version: &'static str,
    kind: &'a str,
    config: &'a ExperimentConfig,
    threads: usize,
    wall_time_seconds: f64,
    verdict: Verdict,
    artifacts: &'a [String],
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("run failed in {0}")]
    Run(#[from] experiments::RunError),
    #[error("output directory {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// Every error maps to exit status 1.
    pub fn exit_code(&self) -> i32 {
        1
    }
}

/// Loads, resolves and runs one experiment; returns its verdict.
pub fn run_file(path: &Path, opts: &RunOptions) -> Result<Verdict, CliError> {
    let mut cfg = config::load(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let base = std::fs::canonicalize(&base).unwrap_or(base);
    experiments::anchor_paths(&mut cfg, &base);
    cfg.resolve(opts.seed, opts.output_dir.clone());
    run_config(&cfg, opts)
}

pub fn run_config(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Verdict, CliError> {
    let started = Instant::now();
    let dir = cfg
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    let io_err = |source| CliError::Output {
        path: dir.clone(),
        source,
    };
    let mut out = Output::create(&dir).map_err(io_err)?;
    let finished = experiments::run(cfg, &mut out, opts.verbose)?;
    let mut summary = vec![
        format!("experiment: {}", cfg.kind),
        format!("model: {}", cfg.model.build().map(|m| m.describe()).unwrap_or_default()),
        format!("seed: {}", cfg.seed.unwrap_or(0)),
    ];
    summary.extend(finished.summary);
    summary.push(String::new());
    out.text("summary.txt", &summary.join("\n")).map_err(io_err)?;
    let artifacts = out.written().to_vec();
    let manifest = Manifest {
        engine: "kinetic-qsd",
        version: env!("CARGO_PKG_VERSION"),
        kind: cfg.kind.name(),
        config: cfg,
        threads: rayon::current_num_threads(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        verdict: finished.verdict,
        artifacts: &artifacts,
    };
    out.json("manifest.json", &manifest).map_err(io_err)?;
    if opts.verbose {
        eprintln!("{}", summary.join("\n"));
    }
    Ok(finished.verdict)
}
