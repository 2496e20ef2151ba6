//! Batch front-end: reads a TOML experiment config, runs it, and writes
//! tables plus `summary.json` and `manifest.toml` into an output directory.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

use std::path::{Path, PathBuf};

use config::{apply_override, parse_table, Experiment, ExperimentConfig};
use error::CliError;
use output::OutputDir;

/// One invocation, as assembled from the command line.
#[derive(Clone, Debug)]
pub struct RunRequest {
    pub experiment: Experiment,
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Finds the line of the first `key = ...` assignment in `text`.
fn line_of_key(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .or_else(|| l.strip_prefix(&format!("\"{key}\"")))
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i + 1)
}

/// Adds `file:line` to an unknown-field error when the key can be found.
fn locate(err: CliError, path: &Path, text: &str) -> CliError {
    let CliError::Config(msg) = &err else { return err };
    let Some(key) = msg.split("unknown field `").nth(1).and_then(|r| r.split('`').next()) else {
        return err;
    };
    match line_of_key(text, key) {
        Some(line) => CliError::Config(format!("{}:{line}: {msg}", path.display())),
        None => err,
    }
}

/// Resolves the config for a request without running anything.
pub fn resolve(req: &RunRequest) -> Result<ExperimentConfig, CliError> {
    let (mut table, text) = match &req.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
            let table = parse_table(&text).map_err(|e| match e {
                CliError::Config(m) => CliError::Config(format!("{}: {m}", p.display())),
                other => other,
            })?;
            (table, Some(text))
        }
        None => (toml::Table::new(), None),
    };
    let name = req.experiment.name();
    match table.get("experiment") {
        None => {
            table.insert("experiment".into(), toml::Value::String(name.into()));
        }
        Some(toml::Value::String(s)) if s == name => {}
        Some(other) => {
            return Err(CliError::Config(format!(
                "config: experiment = {other} does not match the '{name}' subcommand"
            )))
        }
    }
    for o in &req.overrides {
        apply_override(&mut table, o)?;
    }
    if let Some(seed) = req.seed {
        let seed = i64::try_from(seed).map_err(|_| CliError::Config("--seed: must fit in i64".into()))?;
        table.insert("seed".into(), toml::Value::Integer(seed));
    }
    let cfg = ExperimentConfig::from_table(table);
    match (cfg, &req.config, &text) {
        (Err(e), Some(p), Some(t)) => Err(locate(e, p, t)),
        (r, _, _) => r,
    }
}

/// Runs a request. Artifacts are written before a diagnostic error is
/// returned, so a run that exits with code 3 still leaves its tables.
pub fn run(req: &RunRequest) -> Result<PathBuf, CliError> {
    let cfg = resolve(req)?;
    let base = req.config.as_ref().and_then(|p| p.parent()).map(Path::to_path_buf).unwrap_or_default();
    let root = req.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let out = OutputDir::create(&root)?;
    let report = match cfg.experiment {
        Experiment::Tls => experiments::run_tls(&cfg, &base, &out)?,
        Experiment::Pair => experiments::run_pair(&cfg, &out)?,
        Experiment::Trajectories => experiments::run_trajectories(&cfg, &base, &out)?,
        Experiment::Convergence => experiments::run_convergence(&cfg, &out)?,
    };
    let mut summary = report.summary;
    summary["diagnostic"] = report.diagnostic.clone().map_or(serde_json::Value::Null, Into::into);
    out.write_json("summary.json", &summary)?;
    out.write_text("manifest.toml", &cfg.to_toml())?;
    match report.diagnostic {
        Some(d) => Err(CliError::Diagnostic(d)),
        None => Ok(root),
    }
}
