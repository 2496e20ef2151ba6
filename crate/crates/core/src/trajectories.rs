//! Jump-unravelling Monte Carlo.
//!
//! Each trajectory evolves under `H_eff` until the squared norm falls to a
//! pre-drawn uniform threshold; the crossing is located by bisection, a
//! channel is picked with weight `γ_c‖a_c ψ‖²`, and the state collapses. The
//! trajectory with master seed `s` and index `k` draws from the ChaCha8
//! stream `k` of seed `s`, so ensembles do not depend on scheduling.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::grid::TimeGrid;
use crate::hilbert::{norm_sqr, C64, ZERO};
use crate::model::SystemModel;
use crate::propagator::{build_grid, propagator_between, GridOptions, PropagatorGrid};
use crate::scattering::EmissionRecord;

/// Relative width at which the jump-time bisection stops.
const BISECTION_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryOptions {
    /// Bin width of the stepping grid (steps are half bins).
    pub dt: f64,
    pub grid: GridOptions,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self { dt: 0.02, grid: GridOptions::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryResult {
    pub record: EmissionRecord,
    /// Squared norm at the horizon of the state normalized at the last jump
    /// (at `t = 0` without jumps): the no-further-jump probability so far.
    pub final_norm_check: f64,
    pub seed: u64,
    pub stream: u64,
}

/// Empirical photocount statistics of an ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct PhotocountEstimate {
    pub n_traj: usize,
    /// Trajectories with exactly `m` clicks.
    pub counts: Vec<usize>,
    pub probabilities: Vec<f64>,
    /// Binomial standard errors `√(p(1 − p)/n)`.
    pub std_errors: Vec<f64>,
    /// Trajectories per vector of per-channel click counts.
    pub channel_patterns: BTreeMap<Vec<usize>, usize>,
}

/// Stepping grid and model shared by all trajectories of one setup.
pub struct TrajectorySampler {
    gridp: PropagatorGrid,
    horizon: f64,
}

impl TrajectorySampler {
    pub fn new(model: &SystemModel, horizon: f64, options: TrajectoryOptions) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid(format!("trajectories: horizon must be > 0, got {horizon}")));
        }
        if horizon < model.t_pulse() {
            return Err(invalid(format!(
                "trajectories: horizon {horizon} ends before the drive ({})",
                model.t_pulse()
            )));
        }
        if !(options.dt.is_finite() && options.dt > 0.0) {
            return Err(invalid(format!("trajectories: dt must be > 0, got {}", options.dt)));
        }
        // the last node sits exactly on the horizon
        let bins = (horizon / options.dt - 1e-9).ceil().max(1.0) as usize;
        let grid = TimeGrid::new(horizon / bins as f64, bins)?;
        Ok(Self { gridp: build_grid(model, grid, options.grid)?, horizon })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn model(&self) -> &SystemModel {
        self.gridp.model()
    }

    /// Trajectory `stream` of master seed `seed`.
    pub fn sample(&self, seed: u64, stream: u64) -> TrajectoryResult {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let model = self.gridp.model();
        let grid = self.gridp.grid();
        let options = self.gridp.options();
        let rates: Vec<f64> = model.couplings().iter().map(|c| c.rate()).collect();
        let mut psi = model.initial_state().amplitudes().to_vec();
        let mut threshold: f64 = rng.random();
        let mut times = Vec::new();
        let mut channels = Vec::new();
        let mut scratch = vec![ZERO; psi.len()];
        let mut t = 0.0;

        'steps: for n in 0..self.gridp.n_steps() {
            let end = grid.node_time(n + 1);
            loop {
                let next = if t == grid.node_time(n) {
                    self.gridp.step(n).apply(&psi)
                } else {
                    propagator_between(model, t, end, options.per_half_step(), options.method).apply(&psi)
                };
                if norm_sqr(&next) > threshold {
                    psi = next;
                    t = end;
                    break;
                }
                let (s, at_s) = self.locate_jump(t, end, &psi, threshold);
                // collapse
                let weights: Vec<f64> = (0..rates.len())
                    .map(|c| {
                        model.jump(c).apply_into(&at_s, &mut scratch);
                        rates[c] * norm_sqr(&scratch)
                    })
                    .collect();
                let total: f64 = weights.iter().sum();
                if !(total > 0.0) {
                    // nothing left to emit: a threshold reached through
                    // integration error, not decay
                    psi = next;
                    t = end;
                    break;
                }
                let mut pick = rng.random::<f64>() * total;
                let mut channel = weights.len() - 1;
                for (c, w) in weights.iter().enumerate() {
                    if pick < *w {
                        channel = c;
                        break;
                    }
                    pick -= w;
                }
                model.jump(channel).apply_into(&at_s, &mut scratch);
                let norm = norm_sqr(&scratch).sqrt();
                psi = scratch.iter().map(|x| x / norm).collect();
                times.push(s);
                channels.push(channel);
                threshold = rng.random();
                t = s;
            }
            if t >= model.t_pulse() && self.is_stationary(&psi) {
                break 'steps;
            }
        }
        let record = EmissionRecord::new(times, channels).expect("jump times are ordered and in range");
        TrajectoryResult { record, final_norm_check: norm_sqr(&psi), seed, stream }
    }

    /// Bisection for the time in `(t, end]` where `‖U(s, t)ψ‖² = threshold`.
    fn locate_jump(&self, t: f64, end: f64, psi: &[C64], threshold: f64) -> (f64, Vec<C64>) {
        let model = self.gridp.model();
        let options = self.gridp.options();
        let evolve = |s: f64| propagator_between(model, t, s, options.per_half_step(), options.method).apply(psi);
        let (mut lo, mut hi) = (t, end);
        let mut at_hi = None;
        while hi - lo > BISECTION_TOL * hi.max(self.gridp.grid().dt()) {
            let mid = 0.5 * (lo + hi);
            let v = evolve(mid);
            if norm_sqr(&v) > threshold {
                lo = mid;
            } else {
                hi = mid;
                at_hi = Some(v);
            }
        }
        let v = at_hi.unwrap_or_else(|| evolve(hi));
        (hi, v)
    }

    /// After the drive, a state annihilated by `H_eff` never jumps again.
    fn is_stationary(&self, psi: &[C64]) -> bool {
        let model = self.gridp.model();
        let h = model.h_eff_at_drive(0.0);
        let mut out = vec![ZERO; psi.len()];
        h.apply_into(psi, &mut out);
        norm_sqr(&out) <= 1e-28 * norm_sqr(psi)
    }

    /// Trajectories `0..n` of `seed`, in index order.
    pub fn sample_many(&self, n: usize, seed: u64) -> Vec<TrajectoryResult> {
        (0..n as u64).into_par_iter().map(|k| self.sample(seed, k)).collect()
    }

    pub fn estimate(&self, n_traj: usize, seed: u64) -> Result<PhotocountEstimate> {
        if n_traj == 0 {
            return Err(invalid("estimate_photocounts: n_traj must be >= 1"));
        }
        let n_channels = self.model().n_channels();
        let patterns = (0..n_traj as u64)
            .into_par_iter()
            .fold(BTreeMap::new, |mut acc: BTreeMap<Vec<usize>, usize>, k| {
                let r = self.sample(seed, k);
                *acc.entry(r.record.counts(n_channels)).or_insert(0) += 1;
                acc
            })
            .reduce(BTreeMap::new, |mut a, b| {
                for (k, v) in b {
                    *a.entry(k).or_insert(0) += v;
                }
                a
            });
        let max_m = patterns.keys().map(|p| p.iter().sum::<usize>()).max().unwrap_or(0);
        let mut counts = vec![0; max_m + 1];
        for (p, c) in &patterns {
            counts[p.iter().sum::<usize>()] += c;
        }
        let n = n_traj as f64;
        let probabilities: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
        let std_errors = probabilities.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect();
        Ok(PhotocountEstimate { n_traj, counts, probabilities, std_errors, channel_patterns: patterns })
    }
}

/// One trajectory (stream 0 of `seed`).
pub fn sample_trajectory(
    model: &SystemModel,
    horizon: f64,
    seed: u64,
    options: TrajectoryOptions,
) -> Result<TrajectoryResult> {
    Ok(TrajectorySampler::new(model, horizon, options)?.sample(seed, 0))
}

pub fn estimate_photocounts(
    model: &SystemModel,
    horizon: f64,
    n_traj: usize,
    seed: u64,
    options: TrajectoryOptions,
) -> Result<PhotocountEstimate> {
    TrajectorySampler::new(model, horizon, options)?.estimate(n_traj, seed)
}
