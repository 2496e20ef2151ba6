//! No-jump propagators `U(t₂, t₁) = T exp(−i∫H_eff)` on a time grid.
//!
//! Steps span half a bin (node to node). Piecewise-constant stretches use the
//! exact exponential; everything else uses classic RK4. Interval products come
//! from a binary product tree that is filled on first use. Propagators are
//! never inverted: backward evolution integrates the equation of motion with a
//! negative step.

use std::collections::HashMap;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::blocks::BlockDiag;
use crate::error::{invalid, Result};
use crate::expm::expm;
use crate::grid::TimeGrid;
use crate::hilbert::{Operator, StateVector, C64, I, ZERO};
use crate::model::{ModelKind, Side, SystemModel};

/// How half-bin steps are computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StepMethod {
    /// Exact exponential where the drive is constant, RK4 elsewhere.
    #[default]
    Auto,
    /// RK4 everywhere.
    Rk4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridOptions {
    /// RK4 steps per bin; each half-bin step gets half of them, rounded up.
    pub substeps: usize,
    pub method: StepMethod,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self { substeps: 16, method: StepMethod::Auto }
    }
}

impl GridOptions {
    pub(crate) fn per_half_step(&self) -> usize {
        self.substeps.div_ceil(2).max(1)
    }
}

/// Block-diagonal pieces of `K(f) = −i·H_eff` for drive value `f`.
struct Generator {
    h0: BlockDiag,
    v: BlockDiag,
    decay: BlockDiag,
}

impl Generator {
    fn new(model: &SystemModel) -> Self {
        let s = model.block_structure();
        Self {
            h0: s.restrict(model.h0()),
            v: s.restrict(model.drive_operator()),
            decay: s.restrict(model.decay_operator()),
        }
    }

    /// `−i(H0 + fV) − D` per block.
    fn at(&self, f: f64) -> Vec<Operator> {
        self.h0
            .blocks()
            .iter()
            .zip(self.v.blocks())
            .zip(self.decay.blocks())
            .map(|((h0, v), d)| Operator::from_fn(h0.dim(), |r, c| -I * (h0.get(r, c) + v.get(r, c) * f) - d.get(r, c)))
            .collect()
    }
}

/// Drive value at `t` seen from inside the piece `[lo, hi]`.
fn drive_in(model: &SystemModel, t: f64, lo: f64, hi: f64) -> f64 {
    if t <= lo {
        model.drive().amplitude_side(lo, Side::Right)
    } else if t >= hi {
        model.drive().amplitude_side(hi, Side::Left)
    } else {
        model.drive().amplitude(t)
    }
}

/// Splits `[a, b]` (either orientation) at drive discontinuities.
fn pieces(model: &SystemModel, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (lo, hi) = (a.min(b), a.max(b));
    let mut cuts: Vec<f64> = model
        .drive()
        .breakpoints()
        .into_iter()
        .filter(|&x| x > lo + 1e-14 * hi.abs().max(1.0) && x < hi - 1e-14 * hi.abs().max(1.0))
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut points = vec![a];
    if b >= a {
        points.extend(cuts);
    } else {
        points.extend(cuts.into_iter().rev());
    }
    points.push(b);
    points.windows(2).map(|w| (w[0], w[1])).collect()
}

fn block_rk4(model: &SystemModel, gen: &Generator, a: f64, b: f64, n: usize) -> Vec<Operator> {
    let (lo, hi) = (a.min(b), a.max(b));
    let h = (b - a) / n as f64;
    let mut u: Vec<Operator> = gen.h0.blocks().iter().map(|x| Operator::identity(x.dim())).collect();
    for s in 0..n {
        let t = a + s as f64 * h;
        let k_start = gen.at(drive_in(model, t, lo, hi));
        let k_mid = gen.at(drive_in(model, t + 0.5 * h, lo, hi));
        let k_end = gen.at(drive_in(model, if s + 1 == n { b } else { t + h }, lo, hi));
        for (bi, ub) in u.iter_mut().enumerate() {
            let k1 = k_start[bi].matmul(ub);
            let k2 = k_mid[bi].matmul(&(&*ub + &k1.scale_real(0.5 * h)));
            let k3 = k_mid[bi].matmul(&(&*ub + &k2.scale_real(0.5 * h)));
            let k4 = k_end[bi].matmul(&(&*ub + &k3.scale_real(h)));
            let incr = &(&k1 + &k4) + &(&k2 + &k3).scale_real(2.0);
            *ub = &*ub + &incr.scale_real(h / 6.0);
        }
    }
    u
}

fn block_expm(gen: &Generator, f: f64, duration: f64) -> Vec<Operator> {
    gen.at(f).iter().map(|k| expm(&k.scale_real(duration))).collect()
}

/// Propagator from `a` to `b` (`b < a` evolves backward).
fn segment_propagator(
    model: &SystemModel,
    gen: &Generator,
    a: f64,
    b: f64,
    rk4_steps: usize,
    method: StepMethod,
    cache: Option<&HashMap<(u64, u64), Vec<Operator>>>,
) -> BlockDiag {
    let structure = model.block_structure();
    let mut total = BlockDiag::identity(structure);
    let span = (b - a).abs();
    for (p, q) in pieces(model, a, b) {
        let len = (q - p).abs();
        if len == 0.0 {
            continue;
        }
        let constant = match method {
            StepMethod::Auto => model.drive().constant_on(p.min(q), p.max(q)),
            StepMethod::Rk4 => None,
        };
        let blocks = match constant {
            Some(f) => {
                let key = (f.to_bits(), (q - p).to_bits());
                match cache.and_then(|c| c.get(&key)) {
                    Some(b) => b.clone(),
                    None => block_expm(gen, f, q - p),
                }
            }
            None => {
                let n = ((rk4_steps as f64) * len / span).ceil().max(1.0) as usize;
                block_rk4(model, gen, p, q, n)
            }
        };
        total = BlockDiag::from_blocks(structure, blocks).matmul(&total);
    }
    total
}

/// Solution of `i dψ/dt = H_eff(t)ψ` from `t0` to `t1`.
///
/// Constant-drive stretches are exponentiated exactly; the rest uses RK4 with
/// `substeps` steps spread over the interval.
pub fn evolve_state(model: &SystemModel, psi: &StateVector, t0: f64, t1: f64, substeps: usize) -> Result<StateVector> {
    if !(t0.is_finite() && t1.is_finite()) || t1 < t0 {
        return Err(invalid(format!("evolve_state: need t1 >= t0, got [{t0}, {t1}]")));
    }
    if substeps == 0 {
        return Err(invalid("evolve_state: substeps must be >= 1"));
    }
    if psi.dim() != model.dim() {
        return Err(invalid("evolve_state: state dimension differs from the model"));
    }
    let gen = Generator::new(model);
    let u = segment_propagator(model, &gen, t0, t1, substeps, StepMethod::Auto, None);
    Ok(StateVector::new(u.apply(psi.amplitudes())))
}

/// Propagator `U(t1, t0)` for either time order, as block-diagonal operator.
pub fn propagator_between(model: &SystemModel, t0: f64, t1: f64, substeps: usize, method: StepMethod) -> BlockDiag {
    let gen = Generator::new(model);
    segment_propagator(model, &gen, t0, t1, substeps.max(1), method, None)
}

/// Cached half-bin step propagators of a model on a grid, with ordered
/// interval products.
pub struct PropagatorGrid {
    model: SystemModel,
    grid: TimeGrid,
    options: GridOptions,
    steps: Vec<BlockDiag>,
    tree: Vec<OnceLock<BlockDiag>>,
}

/// Steps for all half-bins of `grid`.
pub fn build_grid(model: &SystemModel, grid: TimeGrid, options: GridOptions) -> Result<PropagatorGrid> {
    if options.substeps == 0 {
        return Err(invalid("build_grid: substeps must be >= 1"));
    }
    let gen = Generator::new(model);
    let h = grid.half_step();
    let n_steps = grid.n_nodes() - 1;

    // Exponentials of constant steps are shared: there are only a few values.
    let mut cache = HashMap::new();
    if options.method == StepMethod::Auto {
        for n in 0..n_steps {
            let (a, b) = (grid.node_time(n), grid.node_time(n + 1));
            for (p, q) in pieces(model, a, b) {
                if let Some(f) = model.drive().constant_on(p, q) {
                    cache.entry((f.to_bits(), (q - p).to_bits())).or_insert_with(|| block_expm(&gen, f, q - p));
                }
            }
        }
    }
    let steps: Vec<BlockDiag> = (0..n_steps)
        .into_par_iter()
        .map(|n| {
            let a = n as f64 * h;
            let b = (n + 1) as f64 * h;
            segment_propagator(model, &gen, a, b, options.per_half_step(), options.method, Some(&cache))
        })
        .collect();
    let tree = (0..4 * n_steps.max(1)).map(|_| OnceLock::new()).collect();
    Ok(PropagatorGrid { model: model.clone(), grid, options, steps, tree })
}

impl PropagatorGrid {
    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn options(&self) -> GridOptions {
        self.options
    }

    /// Step from node `n` to node `n + 1`.
    pub fn step(&self, n: usize) -> &BlockDiag {
        &self.steps[n]
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    fn node_product(&self, idx: usize, l: usize, r: usize) -> &BlockDiag {
        if r - l == 1 {
            return &self.steps[l];
        }
        self.tree[idx].get_or_init(|| {
            let m = (l + r) / 2;
            let left = self.node_product(2 * idx, l, m);
            let right = self.node_product(2 * idx + 1, m, r);
            right.matmul(left)
        })
    }

    fn collect<'a>(&'a self, idx: usize, l: usize, r: usize, a: usize, b: usize, out: &mut Vec<&'a BlockDiag>) {
        if b <= l || r <= a {
            return;
        }
        if a <= l && r <= b {
            out.push(self.node_product(idx, l, r));
            return;
        }
        let m = (l + r) / 2;
        self.collect(2 * idx, l, m, a, b, out);
        self.collect(2 * idx + 1, m, r, a, b, out);
    }

    /// `U(t(to), t(from))` between nodes.
    pub fn node_interval(&self, from: usize, to: usize) -> Result<BlockDiag> {
        if from > to || to > self.steps.len() {
            return Err(invalid(format!("node interval [{from}, {to}) is reversed or outside the grid")));
        }
        let mut parts = Vec::new();
        if from < to {
            self.collect(1, 0, self.steps.len(), from, to, &mut parts);
        }
        let mut acc = BlockDiag::identity(self.model.block_structure());
        for p in parts {
            acc = p.matmul(&acc);
        }
        Ok(acc)
    }

    /// Ordered product of the steps over bins `[k_from, k_to)`.
    pub fn interval_propagator(&self, k_from: usize, k_to: usize) -> Result<Operator> {
        if k_from > k_to || k_to > self.grid.n_bins() {
            return Err(invalid(format!(
                "interval_propagator: need 0 <= k_from <= k_to <= {}, got ({k_from}, {k_to})",
                self.grid.n_bins()
            )));
        }
        Ok(self.node_interval(2 * k_from, 2 * k_to)?.to_dense())
    }

    /// Applies steps `from..to` to a raw amplitude vector.
    pub fn propagate_nodes(&self, psi: &[C64], from: usize, to: usize) -> Vec<C64> {
        let mut cur = psi.to_vec();
        let mut next = vec![ZERO; psi.len()];
        for n in from..to {
            self.steps[n].apply_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }
}

/// Heisenberg-picture coefficients of the pair source:
/// `ã₁(τ) = α₁₁a₁ + α₁₂a₂†`, `ã₂(τ) = α₂₂a₂ + α₂₁a₁†`.
#[derive(Clone, Debug)]
pub struct AlphaCoefficients {
    grid: TimeGrid,
    values: Vec<[C64; 4]>,
}

impl AlphaCoefficients {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `α_ij` at a node, for `i, j ∈ {1, 2}`.
    pub fn alpha(&self, i: usize, j: usize, node: usize) -> C64 {
        let k = match (i, j) {
            (1, 1) => 0,
            (1, 2) => 1,
            (2, 1) => 2,
            (2, 2) => 3,
            _ => panic!("alpha indices must be 1 or 2, got ({i}, {j})"),
        };
        self.values[node][k]
    }
}

type Mat4 = [[C64; 4]; 4];

fn mat4_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            out[r][c] = (0..4).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

fn heisenberg_matrix(g: f64, gamma1: f64, gamma2: f64) -> Mat4 {
    let ig = C64::new(0.0, g);
    let re = |x: f64| C64::new(x, 0.0);
    [
        [re(-gamma1 / 2.0), ZERO, ZERO, -ig],
        [ZERO, re(-gamma2 / 2.0), -ig, ZERO],
        [ZERO, ig, re(gamma1 / 2.0), ZERO],
        [ig, ZERO, ZERO, re(gamma2 / 2.0)],
    ]
}

/// Integrates the linear equations of motion of `(ã₁, ã₂, ã₁ᵈ, ã₂ᵈ)` on the
/// grid nodes.
pub fn alpha_coefficients(model: &SystemModel, grid: TimeGrid) -> Result<AlphaCoefficients> {
    alpha_coefficients_with(model, grid, GridOptions::default())
}

pub fn alpha_coefficients_with(model: &SystemModel, grid: TimeGrid, options: GridOptions) -> Result<AlphaCoefficients> {
    let ModelKind::PairSource(params) = model.kind() else {
        return Err(invalid("alpha_coefficients requires a pair-source model"));
    };
    let (g1, g2) = (params.gamma1, params.gamma2);
    let mut m: Mat4 = [[ZERO; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = C64::new(1.0, 0.0);
    }
    let extract = |m: &Mat4| [m[0][0], m[0][3], m[1][2], m[1][1]];
    let mut values = vec![extract(&m)];
    let h = grid.half_step();
    let rk4_steps = options.per_half_step();
    for n in 0..grid.n_nodes() - 1 {
        let (a, b) = (n as f64 * h, (n + 1) as f64 * h);
        for (p, q) in pieces(model, a, b) {
            let constant = match options.method {
                StepMethod::Auto => model.drive().constant_on(p, q),
                StepMethod::Rk4 => None,
            };
            let step = match constant {
                Some(g) => {
                    let k = heisenberg_matrix(g, g1, g2);
                    let op = Operator::from_fn(4, |r, c| k[r][c] * (q - p));
                    let e = expm(&op);
                    let mut s = [[ZERO; 4]; 4];
                    for (r, row) in s.iter_mut().enumerate() {
                        for (c, x) in row.iter_mut().enumerate() {
                            *x = e.get(r, c);
                        }
                    }
                    s
                }
                None => {
                    let steps = ((rk4_steps as f64) * (q - p) / h).ceil().max(1.0) as usize;
                    let dt = (q - p) / steps as f64;
                    let mut s: Mat4 = [[ZERO; 4]; 4];
                    for (i, row) in s.iter_mut().enumerate() {
                        row[i] = C64::new(1.0, 0.0);
                    }
                    for k in 0..steps {
                        let t = p + k as f64 * dt;
                        let at = |t: f64| heisenberg_matrix(drive_in(model, t, p, q), g1, g2);
                        let end = if k + 1 == steps { q } else { t + dt };
                        let (ka, km, kb) = (at(t), at(t + 0.5 * dt), at(end));
                        let add = |x: &Mat4, y: &Mat4, f: f64| {
                            let mut o = *x;
                            for r in 0..4 {
                                for c in 0..4 {
                                    o[r][c] += y[r][c] * f;
                                }
                            }
                            o
                        };
                        let k1 = mat4_mul(&ka, &s);
                        let k2 = mat4_mul(&km, &add(&s, &k1, 0.5 * dt));
                        let k3 = mat4_mul(&km, &add(&s, &k2, 0.5 * dt));
                        let k4 = mat4_mul(&kb, &add(&s, &k3, dt));
                        for r in 0..4 {
                            for c in 0..4 {
                                s[r][c] += (k1[r][c] + (k2[r][c] + k3[r][c]) * 2.0 + k4[r][c]) * (dt / 6.0);
                            }
                        }
                    }
                    s
                }
            };
            m = mat4_mul(&step, &m);
        }
        values.push(extract(&m));
    }
    Ok(AlphaCoefficients { grid, values })
}
