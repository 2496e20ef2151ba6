//! Experiment configuration: TOML with fail-closed keys, plus dotted
//! `--set key=value` overrides applied to the parsed table.

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Tls,
    Pair,
    Trajectories,
    Convergence,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Tls => "tls",
            Experiment::Pair => "pair",
            Experiment::Trajectories => "trajectories",
            Experiment::Convergence => "convergence",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Auto,
    Rk4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    #[default]
    Simpson,
    Midpoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Initial {
    #[default]
    Ground,
    Excited,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryModel {
    #[default]
    Tls,
    Pair,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Bin width in units of 1/γ.
    pub dt: f64,
    /// End of the emission window. For pair runs it is measured from the end
    /// of the pump.
    pub horizon: f64,
    /// RK4 steps per bin.
    pub substeps: usize,
    pub method: Method,
    pub rule: Rule,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { dt: 0.01, horizon: 20.0, substeps: 16, method: Method::Auto, rule: Rule::Simpson }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruncationConfig {
    /// Largest photon number tracked in the output field.
    pub n_max_photons: usize,
    /// Fock cutoff of each pair-source mode.
    pub n_max: usize,
    /// Largest sector kept for G².
    pub sector_cutoff: usize,
    /// Largest acceptable `1 − Σ P_m`; beyond it the run exits with status 3.
    pub threshold: f64,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self { n_max_photons: 3, n_max: 6, sector_cutoff: 3, threshold: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetailConfig {
    pub area_over_pi: f64,
    pub dt: f64,
    pub horizon: f64,
}

impl Default for DetailConfig {
    fn default() -> Self {
        Self { area_over_pi: 2.0, dt: 0.05, horizon: 8.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TlsConfig {
    pub gamma: f64,
    pub t_pulse: f64,
    /// Pulse areas `2ΩT_P` in units of π.
    pub areas_over_pi: Vec<f64>,
    pub initial: Initial,
    /// Optional `time,value` CSV giving the drive shape; it is rescaled to
    /// each swept area and `t_pulse` is ignored.
    pub drive_csv: Option<String>,
    /// Amplitude, flux and G² tables for one area.
    pub detail: Option<DetailConfig>,
}

impl Default for TlsConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            t_pulse: 0.2,
            areas_over_pi: vec![0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0],
            initial: Initial::Ground,
            drive_csv: None,
            detail: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairConfig {
    pub g0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Pump widths σ to sweep.
    pub sigmas: Vec<f64>,
    /// Pump centre `t0 = t0_sigmas·σ`.
    pub t0_sigmas: f64,
    /// Pump cut at `t0 + window_sigmas·σ`.
    pub window_sigmas: f64,
    /// Step is `min(grid.dt, dt_per_sigma·σ)`.
    pub dt_per_sigma: f64,
    pub schmidt: bool,
    pub schmidt_dt: f64,
    pub schmidt_tail: f64,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            g0: 1.0,
            gamma1: 1.0,
            gamma2: 1.0,
            sigmas: vec![0.25, 0.5, 0.75, 1.0, 1.5],
            t0_sigmas: 5.0,
            window_sigmas: 5.0,
            dt_per_sigma: 0.2,
            schmidt: true,
            schmidt_dt: 0.1,
            schmidt_tail: 12.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoriesConfig {
    pub model: TrajectoryModel,
    pub n_traj: usize,
    /// Stepping grid bin width.
    pub dt: f64,
    /// Area (TLS) in units of π, or pump width (pair).
    pub area_over_pi: f64,
    pub sigma: f64,
    /// Click records written for the first trajectories.
    pub records: usize,
}

impl Default for TrajectoriesConfig {
    fn default() -> Self {
        Self { model: TrajectoryModel::Tls, n_traj: 10_000, dt: 0.02, area_over_pi: 1.0, sigma: 0.5, records: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub gamma: f64,
    pub omega: f64,
    pub t_pulse: f64,
    /// Bin widths; each must divide the first.
    pub dts: Vec<f64>,
    /// Reference step is `min(dts) / reference_factor`.
    pub reference_factor: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self { gamma: 1.0, omega: 10.0, t_pulse: 1.0, dts: vec![0.1, 0.05, 0.025, 0.0125], reference_factor: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    /// Write grid tables (amplitudes, flux, G², click records).
    pub tables: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "wgqed-out".into(), tables: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub truncation: TruncationConfig,
    #[serde(default)]
    pub tls: TlsConfig,
    #[serde(default)]
    pub pair: PairConfig,
    #[serde(default)]
    pub trajectories: TrajectoriesConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Parses a config file body into a table (syntax only).
pub fn parse_table(text: &str) -> Result<Table, CliError> {
    text.parse::<Table>().map_err(|e| CliError::Config(format!("config: {}", e.to_string().trim_end())))
}

/// Applies one `key.path=value` override. The value is read as a TOML value
/// and falls back to a bare string.
pub fn apply_override(table: &mut Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set {assignment}: expected key=value")))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("--set {assignment}: malformed key '{key}'")));
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    };
    let mut cur = table;
    for (i, part) in parts[..parts.len() - 1].iter().enumerate() {
        let entry = cur.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => {
                return Err(CliError::Config(format!("--set {assignment}: '{}' is not a table", parts[..=i].join("."))))
            }
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    pub fn from_table(table: Table) -> Result<Self, CliError> {
        let config: Self = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("config: {}", e.message())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        Self::from_table(parse_table(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, why: &str| Err(CliError::Config(format!("config: {key}: {why}")));
        let positive = |x: f64| x.is_finite() && x > 0.0;
        let nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !positive(self.grid.dt) {
            return bad("grid.dt", "must be > 0");
        }
        if !positive(self.grid.horizon) {
            return bad("grid.horizon", "must be > 0");
        }
        if self.grid.substeps == 0 {
            return bad("grid.substeps", "must be >= 1");
        }
        if !(self.truncation.threshold.is_finite() && self.truncation.threshold >= 0.0) {
            return bad("truncation.threshold", "must be >= 0");
        }
        if self.truncation.n_max == 0 {
            return bad("truncation.n_max", "must be >= 1");
        }
        let tls = &self.tls;
        if !nonneg(tls.gamma) {
            return bad("tls.gamma", "must be >= 0");
        }
        if !nonneg(tls.t_pulse) {
            return bad("tls.t_pulse", "must be >= 0");
        }
        if tls.areas_over_pi.iter().any(|a| !a.is_finite()) {
            return bad("tls.areas_over_pi", "must be finite");
        }
        if let Some(d) = &tls.detail {
            if !positive(d.dt) || !positive(d.horizon) || !d.area_over_pi.is_finite() {
                return bad("tls.detail", "dt and horizon must be > 0 and the area finite");
            }
        }
        let pair = &self.pair;
        for (key, v) in [
            ("pair.gamma1", pair.gamma1),
            ("pair.gamma2", pair.gamma2),
            ("pair.window_sigmas", pair.window_sigmas),
            ("pair.t0_sigmas", pair.t0_sigmas),
        ] {
            if !nonneg(v) {
                return bad(key, "must be >= 0");
            }
        }
        if !pair.g0.is_finite() {
            return bad("pair.g0", "must be finite");
        }
        if pair.sigmas.iter().any(|&s| !positive(s)) {
            return bad("pair.sigmas", "must all be > 0");
        }
        for (key, v) in [
            ("pair.dt_per_sigma", pair.dt_per_sigma),
            ("pair.schmidt_dt", pair.schmidt_dt),
            ("pair.schmidt_tail", pair.schmidt_tail),
        ] {
            if !positive(v) {
                return bad(key, "must be > 0");
            }
        }
        let tr = &self.trajectories;
        if tr.n_traj == 0 {
            return bad("trajectories.n_traj", "must be >= 1");
        }
        if !positive(tr.dt) {
            return bad("trajectories.dt", "must be > 0");
        }
        if !positive(tr.sigma) {
            return bad("trajectories.sigma", "must be > 0");
        }
        if !tr.area_over_pi.is_finite() {
            return bad("trajectories.area_over_pi", "must be finite");
        }
        let cv = &self.convergence;
        if cv.dts.is_empty() || cv.dts.iter().any(|&d| !positive(d)) {
            return bad("convergence.dts", "must be a non-empty list of positive steps");
        }
        if cv.dts.iter().any(|&d| {
            let r = cv.dts[0] / d;
            (r - r.round()).abs() > 1e-9 * r || r.round() < 1.0
        }) {
            return bad("convergence.dts", "every step must divide the first");
        }
        if cv.reference_factor == 0 {
            return bad("convergence.reference_factor", "must be >= 1");
        }
        if !nonneg(cv.gamma) || !nonneg(cv.t_pulse) || !cv.omega.is_finite() {
            return bad("convergence", "gamma and t_pulse must be >= 0, omega finite");
        }
        if self.output.dir.is_empty() {
            return bad("output.dir", "must not be empty");
        }
        Ok(())
    }
}
