//! The four batch experiments. Each returns its summary document; tables are
//! written as it goes.

use std::f64::consts::PI;
use std::path::Path;

use serde_json::{json, Value};

use wgqed::analytic_tls::{tls_p0_exact, tls_pm_closed, TlsParams};
use wgqed::grid::{QuadratureRule, TimeGrid};
use wgqed::hilbert::{destroy, Operator, StateVector, I};
use wgqed::model::{build_tls, DriveSpec, DriveTable, PairSourceParams, SystemModel, TlsInitial, WaveguideCoupling};
use wgqed::observables::{flux_trace, g2_grid, g2_pulsewise, purity, schmidt};
use wgqed::propagator::{build_grid, GridOptions, PropagatorGrid, StepMethod};
use wgqed::scattering::{photocounts_by_recursion, scattered_state, scattered_state_with, ScatterOptions};
use wgqed::stats::chi_square;
use wgqed::trajectories::{TrajectoryOptions, TrajectorySampler};

use crate::config::{ExperimentConfig, Initial, Method, Rule, TrajectoryModel};
use crate::error::CliError;
use crate::output::{number, OutputDir};

/// Summary plus an optional failed diagnostic.
pub struct Report {
    pub summary: Value,
    pub diagnostic: Option<String>,
}

fn grid_options(cfg: &ExperimentConfig) -> GridOptions {
    GridOptions {
        substeps: cfg.grid.substeps,
        method: match cfg.grid.method {
            Method::Auto => StepMethod::Auto,
            Method::Rk4 => StepMethod::Rk4,
        },
    }
}

fn rule(cfg: &ExperimentConfig) -> QuadratureRule {
    match cfg.grid.rule {
        Rule::Simpson => QuadratureRule::Simpson,
        Rule::Midpoint => QuadratureRule::Midpoint,
    }
}

fn initial(cfg: &ExperimentConfig) -> TlsInitial {
    match cfg.tls.initial {
        Initial::Ground => TlsInitial::Ground,
        Initial::Excited => TlsInitial::Excited,
    }
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

/// Largest step `≤ dt` that puts `t_pulse` on a bin edge.
fn snap_dt(dt: f64, t_pulse: f64) -> f64 {
    if t_pulse > 0.0 {
        t_pulse / (t_pulse / dt).round().max(1.0)
    } else {
        dt
    }
}

/// Drive shape read from a CSV file, with `∫f dt`.
pub struct DriveShape {
    table: DriveTable,
    integral: f64,
}

impl DriveShape {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("tls.drive_csv: cannot read {}: {e}", path.display())))?;
        let table = DriveTable::parse_csv(&text).map_err(|e| match e {
            wgqed::Error::Parse { line, message } => CliError::Config(format!("{}:{line}: {message}", path.display())),
            other => CliError::Config(format!("{}: {other}", path.display())),
        })?;
        let (t, v) = (table.times(), table.values());
        let integral: f64 = (1..t.len()).map(|k| 0.5 * (v[k] + v[k - 1]) * (t[k] - t[k - 1])).sum();
        if integral == 0.0 {
            return Err(CliError::Config("tls.drive_csv: the drive integrates to zero".into()));
        }
        Ok(Self { table, integral })
    }
}

fn tls_model(cfg: &ExperimentConfig, shape: Option<&DriveShape>, area: f64) -> Result<SystemModel, CliError> {
    let tls = &cfg.tls;
    match shape {
        None => {
            if tls.t_pulse == 0.0 && area != 0.0 {
                return Err(CliError::Config("tls.t_pulse: must be > 0 for a nonzero area".into()));
            }
            let omega = if tls.t_pulse > 0.0 { area / (2.0 * tls.t_pulse) } else { 0.0 };
            Ok(build_tls(tls.gamma, omega, tls.t_pulse, initial(cfg))?)
        }
        Some(shape) => {
            let scale = area / (2.0 * shape.integral);
            let values = shape.table.values().iter().map(|v| v * scale).collect();
            let table = DriveTable::new(shape.table.times().to_vec(), values)?;
            let sigma = destroy(1)?;
            let v = (&sigma.adjoint() - &sigma).scale(I);
            let psi0 = match initial(cfg) {
                TlsInitial::Ground => StateVector::basis(2, 0)?,
                TlsInitial::Excited => StateVector::basis(2, 1)?,
            };
            Ok(SystemModel::custom(
                Operator::zeros(2),
                v,
                DriveSpec::Custom(table),
                vec![WaveguideCoupling::new(sigma, tls.gamma)?],
                psi0,
            )?)
        }
    }
}

fn tls_grid(cfg: &ExperimentConfig, model: &SystemModel, dt: f64, horizon: f64) -> Result<PropagatorGrid, CliError> {
    if horizon < model.t_pulse() {
        return Err(CliError::Config(format!("grid.horizon: {horizon} ends before the drive ({})", model.t_pulse())));
    }
    let dt = snap_dt(dt, model.t_pulse());
    Ok(build_grid(model, TimeGrid::covering(dt, horizon)?, grid_options(cfg))?)
}

fn load_shape(cfg: &ExperimentConfig, base: &Path) -> Result<Option<DriveShape>, CliError> {
    cfg.tls.drive_csv.as_ref().map(|p| DriveShape::load(&base.join(p))).transpose()
}

pub fn run_tls(cfg: &ExperimentConfig, base: &Path, out: &OutputDir) -> Result<Report, CliError> {
    let shape = load_shape(cfg, base)?;
    let n = cfg.truncation.n_max_photons;
    let mut header: Vec<String> = vec!["area_over_pi".into(), "area".into()];
    header.extend((0..=n).map(|m| format!("p{m}")));
    header.extend(["deficit", "g2_0", "p0_exact", "p1_first_order", "p2_first_order"].map(String::from));
    let mut rows = Vec::new();
    let mut points = Vec::new();
    let mut max_deficit: f64 = 0.0;
    let mut dt_used = cfg.grid.dt;
    for &k in &cfg.tls.areas_over_pi {
        let area = k * PI;
        let model = tls_model(cfg, shape.as_ref(), area)?;
        let gridp = tls_grid(cfg, &model, cfg.grid.dt, cfg.grid.horizon)?;
        dt_used = gridp.grid().dt();
        let p = photocounts_by_recursion(&gridp, n, rule(cfg))?;
        let deficit = 1.0 - p.iter().sum::<f64>();
        max_deficit = max_deficit.max(deficit);
        let g2 = g2_pulsewise(&p).unwrap_or(f64::NAN);
        let closed = if shape.is_none() && cfg.tls.initial == Initial::Ground && cfg.tls.t_pulse > 0.0 {
            let params = TlsParams::from_area(cfg.tls.gamma, area, cfg.tls.t_pulse)?;
            [tls_p0_exact(&params), tls_pm_closed(&params, 1)?, tls_pm_closed(&params, 2)?]
        } else {
            [f64::NAN; 3]
        };
        let mut row = vec![number(k), number(area)];
        row.extend(p.iter().map(|&x| number(x)));
        row.extend([deficit, g2].into_iter().chain(closed).map(number));
        rows.push(row);
        points.push(json!({
            "area_over_pi": k,
            "photocounts": p,
            "deficit": deficit,
            "g2_0": finite_or_null(g2),
            "p0_exact": finite_or_null(closed[0]),
        }));
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    out.write_table("photocounts.csv", &header_refs, &rows)?;

    let mut summary = json!({
        "experiment": "tls",
        "dt": dt_used,
        "horizon": cfg.grid.horizon,
        "n_max_photons": n,
        "points": points,
        "max_deficit": max_deficit,
        "threshold": cfg.truncation.threshold,
    });
    if let (Some(detail), true) = (&cfg.tls.detail, cfg.output.tables) {
        summary["detail"] = tls_detail(cfg, shape.as_ref(), detail, out)?;
    }
    let diagnostic = (max_deficit > cfg.truncation.threshold).then(|| {
        format!("photon-number truncation: 1 - sum P_m = {max_deficit:.3e} exceeds {:.3e}", cfg.truncation.threshold)
    });
    Ok(Report { summary, diagnostic })
}

fn tls_detail(
    cfg: &ExperimentConfig,
    shape: Option<&DriveShape>,
    detail: &crate::config::DetailConfig,
    out: &OutputDir,
) -> Result<Value, CliError> {
    let model = tls_model(cfg, shape, detail.area_over_pi * PI)?;
    let gridp = tls_grid(cfg, &model, detail.dt, detail.horizon)?;
    let options = ScatterOptions { rule: rule(cfg), ..ScatterOptions::new(cfg.truncation.sector_cutoff.max(1)) };
    let state = scattered_state_with(&gridp, &options)?;
    let grid = *gridp.grid();
    let active = state.quadrature().active_nodes();
    let one = state.sector(&[1]).expect("one-photon sector is stored");
    let amp_rows: Vec<Vec<String>> = active
        .iter()
        .map(|&a| {
            let v = one[a];
            vec![number(grid.node_time(a)), number(v.re), number(v.im), number(v.norm_sqr())]
        })
        .collect();
    out.write_table("amplitudes_1.csv", &["t", "re", "im", "abs2"], &amp_rows)?;
    let flux = flux_trace(&state, None);
    let flux_rows: Vec<Vec<String>> =
        active.iter().map(|&a| vec![number(grid.node_time(a)), number(flux[a])]).collect();
    out.write_table("flux.csv", &["t", "flux"], &flux_rows)?;
    let g = g2_grid(&state, None);
    let mut g_rows = Vec::with_capacity(active.len() * active.len());
    for &a in &active {
        for &b in &active {
            g_rows.push(vec![number(grid.node_time(a)), number(grid.node_time(b)), number(g[a][b])]);
        }
    }
    out.write_table("g2.csv", &["t1", "t2", "g2"], &g_rows)?;
    let w = state.quadrature().weights();
    let p = state.photocounts();
    let flux_integral: f64 = active.iter().map(|&a| flux[a] * w[a]).sum();
    let mean: f64 = p.iter().enumerate().map(|(m, x)| m as f64 * x).sum();
    Ok(json!({
        "area_over_pi": detail.area_over_pi,
        "dt": grid.dt(),
        "photocounts": p,
        "flux_integral": flux_integral,
        "mean_photons": mean,
    }))
}

fn pair_model(cfg: &ExperimentConfig, g0: f64, sigma: f64, dt: f64) -> Result<SystemModel, CliError> {
    let p = &cfg.pair;
    let model = PairSourceParams {
        g0,
        t0: p.t0_sigmas * sigma,
        sigma,
        gamma1: p.gamma1,
        gamma2: p.gamma2,
        n_max: cfg.truncation.n_max,
        window_sigmas: p.window_sigmas,
    }
    .build()?;
    Ok(model.snapped(dt)?.0)
}

pub fn run_pair(cfg: &ExperimentConfig, out: &OutputDir) -> Result<Report, CliError> {
    let n = cfg.truncation.n_max_photons.max(2);
    let mut header: Vec<String> = vec!["sigma".into()];
    header.extend((0..=n).map(|m| format!("p{m}")));
    header.extend(["deficit", "purity", "schmidt_number", "g2_0"].map(String::from));
    let mut rows = Vec::new();
    let mut points = Vec::new();
    let mut max_deficit: f64 = 0.0;
    for &sigma in &cfg.pair.sigmas {
        let dt = cfg.grid.dt.min(cfg.pair.dt_per_sigma * sigma);
        let model = pair_model(cfg, cfg.pair.g0, sigma, dt)?;
        let gridp = build_grid(&model, TimeGrid::covering(dt, model.t_pulse() + cfg.grid.horizon)?, grid_options(cfg))?;
        let p = photocounts_by_recursion(&gridp, n, rule(cfg))?;
        let deficit = 1.0 - p.iter().sum::<f64>();
        max_deficit = max_deficit.max(deficit);
        let pur = purity(&p).unwrap_or(f64::NAN);
        let g2 = g2_pulsewise(&p).unwrap_or(f64::NAN);
        let (k, lambdas) = if cfg.pair.schmidt {
            let model = pair_model(cfg, cfg.pair.g0, sigma, cfg.pair.schmidt_dt)?;
            let grid = TimeGrid::covering(cfg.pair.schmidt_dt, model.t_pulse() + cfg.pair.schmidt_tail)?;
            let gridp = build_grid(&model, grid, grid_options(cfg))?;
            let options = ScatterOptions { rule: rule(cfg), sectors: Some(vec![vec![1, 1]]), ..ScatterOptions::new(2) };
            let state = scattered_state_with(&gridp, &options)?;
            match schmidt(&state) {
                Ok(s) => (s.schmidt_number, s.lambdas.into_iter().take(8).collect::<Vec<_>>()),
                Err(_) => (f64::NAN, Vec::new()),
            }
        } else {
            (f64::NAN, Vec::new())
        };
        let mut row = vec![number(sigma)];
        row.extend(p.iter().map(|&x| number(x)));
        row.extend([deficit, pur, k, g2].map(number));
        rows.push(row);
        points.push(json!({
            "sigma": sigma,
            "dt": dt,
            "t_pulse": model.t_pulse(),
            "photocounts": p,
            "deficit": deficit,
            "purity": finite_or_null(pur),
            "schmidt_number": finite_or_null(k),
            "schmidt_lambdas": lambdas,
            "g2_0": finite_or_null(g2),
        }));
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    out.write_table("pair.csv", &header_refs, &rows)?;
    let summary = json!({
        "experiment": "pair",
        "g0": cfg.pair.g0,
        "n_max": cfg.truncation.n_max,
        "n_max_photons": n,
        "points": points,
        "max_deficit": max_deficit,
        "threshold": cfg.truncation.threshold,
    });
    let diagnostic = (max_deficit > cfg.truncation.threshold).then(|| {
        format!("photon-number truncation: 1 - sum P_m = {max_deficit:.3e} exceeds {:.3e}", cfg.truncation.threshold)
    });
    Ok(Report { summary, diagnostic })
}

pub fn run_trajectories(cfg: &ExperimentConfig, base: &Path, out: &OutputDir) -> Result<Report, CliError> {
    let tr = &cfg.trajectories;
    let (model, horizon, quad_dt) = match tr.model {
        TrajectoryModel::Tls => {
            let shape = load_shape(cfg, base)?;
            let model = tls_model(cfg, shape.as_ref(), tr.area_over_pi * PI)?;
            let dt = snap_dt(cfg.grid.dt, model.t_pulse());
            (model, cfg.grid.horizon, dt)
        }
        TrajectoryModel::Pair => {
            let dt = cfg.grid.dt.min(cfg.pair.dt_per_sigma * tr.sigma);
            let model = pair_model(cfg, cfg.pair.g0, tr.sigma, dt)?;
            let horizon = model.t_pulse() + cfg.grid.horizon;
            (model, horizon, dt)
        }
    };
    let options = TrajectoryOptions { dt: tr.dt, grid: grid_options(cfg) };
    let sampler = TrajectorySampler::new(&model, horizon, options)?;
    let est = sampler.estimate(tr.n_traj, cfg.seed)?;

    let n = cfg.truncation.n_max_photons;
    let quad_grid = build_grid(&model, TimeGrid::covering(quad_dt, horizon)?, grid_options(cfg))?;
    let quad = photocounts_by_recursion(&quad_grid, n, rule(cfg))?;
    let n_rows = est.counts.len().max(n + 1);
    let rows: Vec<Vec<String>> = (0..n_rows)
        .map(|m| {
            let c = est.counts.get(m).copied().unwrap_or(0);
            let p = est.probabilities.get(m).copied().unwrap_or(0.0);
            let se = est.std_errors.get(m).copied().unwrap_or(0.0);
            vec![m.to_string(), c.to_string(), number(p), number(se), number(quad.get(m).copied().unwrap_or(f64::NAN))]
        })
        .collect();
    out.write_table("counts.csv", &["m", "count", "probability", "std_error", "quadrature"], &rows)?;

    // categories 0..n-1 and "n or more"
    let mut observed = vec![0usize; n + 1];
    for (m, &c) in est.counts.iter().enumerate() {
        observed[m.min(n)] += c;
    }
    let mut expected: Vec<f64> = quad[..n].to_vec();
    expected.push(1.0 - expected.iter().sum::<f64>());
    let keep: Vec<usize> = (0..=n).filter(|&m| expected[m] > 1e-12).collect();
    let chi = chi_square(
        &keep.iter().map(|&m| observed[m]).collect::<Vec<_>>(),
        &keep.iter().map(|&m| expected[m]).collect::<Vec<_>>(),
    )
    .ok();

    if cfg.output.tables && tr.records > 0 {
        let runs = sampler.sample_many(tr.records.min(tr.n_traj), cfg.seed);
        let mut rows = Vec::new();
        for r in &runs {
            for (i, (&t, &c)) in r.record.times().iter().zip(r.record.channels()).enumerate() {
                rows.push(vec![r.stream.to_string(), i.to_string(), number(t), c.to_string()]);
            }
        }
        out.write_table("clicks.csv", &["trajectory", "click", "t", "channel"], &rows)?;
    }
    let patterns: Vec<Value> =
        est.channel_patterns.iter().map(|(k, v)| json!({"counts": k, "trajectories": v})).collect();
    let summary = json!({
        "experiment": "trajectories",
        "model": match tr.model { TrajectoryModel::Tls => "tls", TrajectoryModel::Pair => "pair" },
        "n_traj": tr.n_traj,
        "seed": cfg.seed,
        "horizon": horizon,
        "probabilities": est.probabilities,
        "std_errors": est.std_errors,
        "quadrature": quad,
        "chi_square": chi.map(|c| c.statistic),
        "chi_square_p_value": chi.map(|c| c.p_value),
        "channel_patterns": patterns,
    });
    Ok(Report { summary, diagnostic: None })
}

pub fn run_convergence(cfg: &ExperimentConfig, out: &OutputDir) -> Result<Report, CliError> {
    let cv = &cfg.convergence;
    let model = build_tls(cv.gamma, cv.omega, cv.t_pulse, TlsInitial::Ground)?;
    let coarse = cv.dts[0];
    let bins = (cfg.grid.horizon / coarse).round().max(1.0) as usize;
    if (bins as f64) * coarse < cv.t_pulse {
        return Err(CliError::Config("grid.horizon: must cover convergence.t_pulse".into()));
    }
    let finest = cv.dts.iter().copied().fold(f64::INFINITY, f64::min);
    let ref_ratio = ((coarse / finest).round() as usize) * cv.reference_factor;
    let state = |ratio: usize| -> Result<_, CliError> {
        let grid = TimeGrid::new(coarse / ratio as f64, bins * ratio)?;
        let gridp = build_grid(&model, grid, grid_options(cfg))?;
        Ok(scattered_state(&gridp, 2)?)
    };
    let reference = state(ref_ratio)?;
    let n_coarse = 2 * bins + 1;
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for &dt in &cv.dts {
        let r = (coarse / dt).round() as usize;
        let s = state(r)?;
        let mut e: f64 = 0.0;
        for a in 0..n_coarse {
            e = e.max((s.get(&[vec![a * r]]) - reference.get(&[vec![a * ref_ratio]])).norm());
            for b in a..n_coarse {
                let v = s.get(&[vec![a * r, b * r]]) - reference.get(&[vec![a * ref_ratio, b * ref_ratio]]);
                e = e.max(v.norm());
            }
        }
        let ratio = errors.last().map_or(f64::NAN, |prev: &f64| prev / e);
        rows.push(vec![number(dt), number(e), number(ratio)]);
        errors.push(e);
    }
    out.write_table("convergence.csv", &["dt", "max_error", "ratio"], &rows)?;
    let summary = json!({
        "experiment": "convergence",
        "dts": cv.dts,
        "reference_dt": coarse / ref_ratio as f64,
        "max_errors": errors,
    });
    Ok(Report { summary, diagnostic: None })
}
