//! Experiment driver: one TOML config in, a directory of CSV, JSON and field files out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod output;

use config::{ConfigError, ExperimentConfig};
use experiments::RunError;
use output::Outputs;
use serde_json::json;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const THREADS_ENV: &str = "FRACPME_THREADS";

#[derive(Debug)]
pub enum Failure {
    /// Unreadable or invalid config; nothing was written.
    Config { path: PathBuf, error: ConfigError },
    /// The experiment started and failed; `error.json` and the manifest were written.
    Runtime { report: serde_json::Value },
}

/// Output directory: the CLI override, else the config's `output` resolved against the config file's directory.
pub fn output_dir(cfg: &ExperimentConfig, config_path: &Path, override_dir: Option<&Path>) -> PathBuf {
    match override_dir {
        Some(d) => d.to_path_buf(),
        None if cfg.output.is_absolute() => cfg.output.clone(),
        None => config_path.parent().unwrap_or(Path::new(".")).join(&cfg.output),
    }
}

pub fn load(path: &Path) -> Result<(String, ExperimentConfig), Failure> {
    let src = std::fs::read_to_string(path).map_err(|e| Failure::Config {
        path: path.to_path_buf(),
        error: ConfigError { line: None, message: format!("cannot read config: {e}") },
    })?;
    let cfg = ExperimentConfig::parse(&src).map_err(|error| Failure::Config { path: path.to_path_buf(), error })?;
    Ok((src, cfg))
}

/// Thread count from the environment override, else the config.
pub fn thread_count(cfg: &ExperimentConfig, env: Option<&str>) -> Result<usize, Failure> {
    match env {
        Some(v) => v.trim().parse().map_err(|_| Failure::Config {
            path: PathBuf::from(THREADS_ENV),
            error: ConfigError { line: None, message: format!("{THREADS_ENV} must be a non-negative integer, got '{v}'") },
        }),
        None => Ok(cfg.threads),
    }
}

/// Runs the experiment and writes the manifest. Returns the manifest on success.
pub fn execute(src: &str, cfg: &ExperimentConfig, dir: &Path) -> Result<serde_json::Value, Failure> {
    let start = Instant::now();
    let runtime = |e: RunError| json!({ "error": e.kind(), "message": e.to_string(), "experiment": cfg.experiment });
    let mut out = Outputs::create(dir).map_err(|e| Failure::Runtime { report: runtime(e.into()) })?;
    let result = experiments::run(cfg, &mut out);
    let elapsed = start.elapsed().as_secs_f64();
    let (status, summary, error) = match result {
        Ok(s) => ("ok", s, None),
        Err(e) => {
            let report = runtime(e);
            let _ = out.write_json("error.json", &report);
            ("error", serde_json::Value::Null, Some(report))
        }
    };
    let manifest = json!({
        "experiment": cfg.experiment,
        "status": status,
        "config": cfg,
        "config_sha256": format!("{:x}", Sha256::digest(src.as_bytes())),
        "seed": cfg.seed,
        "threads": rayon::current_num_threads(),
        "versions": { "fracpme": env!("CARGO_PKG_VERSION"), "fracpme-core": fracpme_core::VERSION },
        "timings": { "experiment_seconds": elapsed },
        "outputs": out.files(),
        "summary": summary,
        "error": error,
    });
    if let Err(e) = out.write_json_untracked("manifest.json", &manifest) {
        return Err(Failure::Runtime { report: runtime(e.into()) });
    }
    match error {
        Some(report) => Err(Failure::Runtime { report }),
        None => Ok(manifest),
    }
}
