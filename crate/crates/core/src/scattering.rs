//! Scattering amplitudes and the discretized scattered field.
//!
//! An amplitude alternates no-jump propagation with jumps `√γ_Q a_Q` at the
//! emission times and closes with `⟨0|U(τ_max, τ_N)`, `τ_max = max(T_P, τ_N)`.
//! Emission times sit on grid nodes. Within a channel, times form a multiset
//! (coincident nodes are allowed and weighted by `1/k!`); across channels,
//! coincident emissions are applied in ascending channel order.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::grid::{Quadrature, QuadratureRule, TimeGrid};
use crate::hilbert::{SparseOperator, C64, ZERO};
use crate::propagator::PropagatorGrid;

/// Chronological emission times with the waveguide of each event.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmissionRecord {
    times: Vec<f64>,
    channels: Vec<usize>,
}

impl EmissionRecord {
    pub fn new(times: Vec<f64>, channels: Vec<usize>) -> Result<Self> {
        if times.len() != channels.len() {
            return Err(invalid("emission record: times and channels differ in length"));
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(invalid("emission record: times must be finite and >= 0"));
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("emission record: times must be nondecreasing"));
        }
        Ok(Self { times, channels })
    }

    /// Record on a single waveguide.
    pub fn single_channel(times: Vec<f64>) -> Result<Self> {
        let n = times.len();
        Self::new(times, vec![0; n])
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn channels(&self) -> &[usize] {
        &self.channels
    }

    /// Events per channel.
    pub fn counts(&self, n_channels: usize) -> Vec<usize> {
        let mut counts = vec![0; n_channels];
        for &c in &self.channels {
            if c < n_channels {
                counts[c] += 1;
            }
        }
        counts
    }
}

pub(crate) fn validate_record(gridp: &PropagatorGrid, record: &EmissionRecord) -> Result<Vec<usize>> {
    let n_channels = gridp.model().n_channels();
    if let Some(&c) = record.channels().iter().find(|&&c| c >= n_channels) {
        return Err(invalid(format!("emission record: channel {c} does not exist")));
    }
    record.times().iter().map(|&t| gridp.grid().node_of(t)).collect()
}

fn apply_jump(gridp: &PropagatorGrid, channel: usize, psi: &[C64], out: &mut [C64]) {
    let model = gridp.model();
    model.jump(channel).apply_into(psi, out);
    let s = model.rate(channel).sqrt();
    for x in out.iter_mut() {
        *x *= s;
    }
}

/// `ψ` after the recorded jumps, at the node of the last emission.
fn conditioned_state(gridp: &PropagatorGrid, record: &EmissionRecord, nodes: &[usize]) -> Result<(Vec<C64>, usize)> {
    let mut psi = gridp.model().initial_state().amplitudes().to_vec();
    let mut scratch = vec![ZERO; psi.len()];
    let mut cur = 0;
    for (&node, &c) in nodes.iter().zip(record.channels()) {
        psi = gridp.node_interval(cur, node)?.apply(&psi);
        apply_jump(gridp, c, &psi, &mut scratch);
        std::mem::swap(&mut psi, &mut scratch);
        cur = node;
    }
    Ok((psi, cur))
}

/// Scattering amplitude of one emission record (a continuum density; it
/// carries no quadrature weight).
pub fn amplitude(gridp: &PropagatorGrid, record: &EmissionRecord) -> Result<C64> {
    let nodes = validate_record(gridp, record)?;
    let rows = TerminalRows::asymptotic(gridp, 0)?;
    let (psi, last) = conditioned_state(gridp, record, &nodes)?;
    Ok(rows.close(last, &psi))
}

/// Joint system-waveguide amplitude at time `t`: the field holds the recorded
/// photons and the system is in basis state `system_basis_index`.
pub fn entangled_snapshot(
    gridp: &PropagatorGrid,
    t: f64,
    record: &EmissionRecord,
    system_basis_index: usize,
) -> Result<C64> {
    let grid = gridp.grid();
    let t_node = grid.node_of(t)?;
    if system_basis_index >= gridp.model().dim() {
        return Err(invalid(format!("system basis index {system_basis_index} out of range")));
    }
    let nodes = validate_record(gridp, record)?;
    if let Some(&n) = nodes.iter().find(|&&n| n > t_node) {
        return Err(invalid(format!("emission at {} lies after the snapshot time {t}", grid.node_time(n))));
    }
    let (psi, last) = conditioned_state(gridp, record, &nodes)?;
    Ok(gridp.node_interval(last, t_node)?.apply(&psi)[system_basis_index])
}

/// Row vectors `⟨k|U(t_final, t_n)` for every node `n` up to the final node.
pub(crate) struct TerminalRows {
    rows: Vec<Vec<C64>>,
}

impl TerminalRows {
    /// `⟨k|U(max(T_P, t_n), t_n)`.
    pub(crate) fn asymptotic(gridp: &PropagatorGrid, k: usize) -> Result<Self> {
        let grid = gridp.grid();
        let model = gridp.model();
        let dim = model.dim();
        let tp = model.t_pulse();
        let tol = 1e-9 * grid.dt();
        if tp > grid.t_end() + tol {
            return Err(invalid(format!("drive horizon {tp} lies beyond the grid end {}", grid.t_end())));
        }
        let mut e = vec![ZERO; dim];
        e[k] = C64::new(1.0, 0.0);
        let n_nodes = grid.n_nodes();
        let mut rows = vec![e.clone(); n_nodes];
        // first node at or after T_P
        let first_after = (0..n_nodes).find(|&n| grid.node_time(n) >= tp - tol).unwrap_or(n_nodes - 1);
        if first_after > 0 {
            let below = first_after - 1;
            let t_below = grid.node_time(below);
            let u = if (grid.node_time(first_after) - tp).abs() <= tol {
                gridp.step(below).clone()
            } else {
                let substeps = gridp.options().substeps;
                crate::propagator::propagator_between(model, t_below, tp, substeps, gridp.options().method)
            };
            u.apply_left_into(&e, &mut rows[below]);
            for n in (0..below).rev() {
                let (head, tail) = rows.split_at_mut(n + 1);
                gridp.step(n).apply_left_into(&tail[0], &mut head[n]);
            }
        }
        Ok(Self { rows })
    }

    /// `⟨k|U(t_end_node, t_n)` for `n ≤ end_node`.
    pub(crate) fn at_node(gridp: &PropagatorGrid, k: usize, end_node: usize) -> Self {
        let dim = gridp.model().dim();
        let mut rows = vec![vec![ZERO; dim]; end_node + 1];
        rows[end_node][k] = C64::new(1.0, 0.0);
        for n in (0..end_node).rev() {
            let (head, tail) = rows.split_at_mut(n + 1);
            gridp.step(n).apply_left_into(&tail[0], &mut head[n]);
        }
        Self { rows }
    }

    #[inline]
    pub(crate) fn close(&self, node: usize, psi: &[C64]) -> C64 {
        self.rows[node].iter().zip(psi).map(|(a, b)| a * b).sum()
    }

    pub(crate) fn row(&self, node: usize) -> &[C64] {
        &self.rows[node]
    }
}

/// Binomial coefficients `C(n, k)` for `k ≤ k_max`.
#[derive(Clone, Debug)]
struct Binomials {
    table: Vec<Vec<usize>>,
}

impl Binomials {
    fn new(n_max: usize, k_max: usize) -> Self {
        let mut table = vec![vec![0usize; n_max + 1]; k_max + 1];
        for n in 0..=n_max {
            table[0][n] = 1;
        }
        for k in 1..=k_max {
            for n in 1..=n_max {
                table[k][n] = table[k - 1][n - 1].saturating_add(table[k][n - 1]);
            }
        }
        Self { table }
    }

    #[inline]
    fn get(&self, n: usize, k: usize) -> usize {
        self.table[k][n]
    }
}

/// Number of nondecreasing length-`m` sequences over `n` nodes.
fn multiset_count(n: usize, m: usize) -> Option<usize> {
    let mut acc: u128 = 1;
    for i in 0..m {
        acc = acc * (n + i) as u128 / (i + 1) as u128;
    }
    usize::try_from(acc).ok()
}

/// Colex rank of a nondecreasing sequence.
fn multiset_rank(binom: &Binomials, nodes: &[usize]) -> usize {
    nodes.iter().enumerate().map(|(j, &x)| binom.get(x + j, j + 1)).sum()
}

/// Amplitudes of the scattered field, one dense array per photon-count sector.
///
/// A sector is keyed by the per-waveguide photon counts. Within a sector the
/// index is a mixed-radix combination of per-channel multiset ranks with
/// channel 0 most significant; for one photon per channel on two channels the
/// index is `node₁·n_nodes + node₂`.
#[derive(Clone, Debug)]
pub struct ScatteredState {
    grid: TimeGrid,
    quadrature: Quadrature,
    n_channels: usize,
    n_max_photons: usize,
    sectors: BTreeMap<Vec<usize>, Vec<C64>>,
    binom: Binomials,
}

impl ScatteredState {
    /// Builds a state from explicit sector arrays.
    pub fn from_sectors(
        grid: TimeGrid,
        quadrature: Quadrature,
        n_channels: usize,
        sectors: BTreeMap<Vec<usize>, Vec<C64>>,
    ) -> Result<Self> {
        if quadrature.weights().len() != grid.n_nodes() {
            return Err(invalid("quadrature does not match the grid"));
        }
        let mut n_max_photons = 0;
        for (counts, amps) in &sectors {
            if counts.len() != n_channels {
                return Err(invalid(format!("sector {counts:?} does not have {n_channels} channels")));
            }
            let expected =
                sector_len(grid.n_nodes(), counts).ok_or_else(|| invalid(format!("sector {counts:?} is too large")))?;
            if amps.len() != expected {
                return Err(invalid(format!("sector {counts:?} holds {} amplitudes, expected {expected}", amps.len())));
            }
            n_max_photons = n_max_photons.max(counts.iter().sum());
        }
        let binom = Binomials::new(grid.n_nodes() + n_max_photons, n_max_photons + 1);
        Ok(Self { grid, quadrature, n_channels, n_max_photons, sectors, binom })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quadrature
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_max_photons(&self) -> usize {
        self.n_max_photons
    }

    pub fn sectors(&self) -> impl Iterator<Item = (&[usize], &[C64])> {
        self.sectors.iter().map(|(k, v)| (k.as_slice(), v.as_slice()))
    }

    pub fn sector(&self, counts: &[usize]) -> Option<&[C64]> {
        self.sectors.get(counts).map(Vec::as_slice)
    }

    /// Amplitude of the empty field.
    pub fn vacuum(&self) -> C64 {
        self.sector(&vec![0; self.n_channels]).map_or(ZERO, |s| s[0])
    }

    /// Index of a tuple (nondecreasing node lists per channel) within its sector.
    pub fn index_of(&self, nodes_per_channel: &[Vec<usize>]) -> usize {
        let mut idx = 0;
        for nodes in nodes_per_channel {
            let size = multiset_count(self.grid.n_nodes(), nodes.len()).expect("sector size fits");
            idx = idx * size + multiset_rank(&self.binom, nodes);
        }
        idx
    }

    /// Amplitude of a tuple; zero for sectors that are not stored.
    pub fn get(&self, nodes_per_channel: &[Vec<usize>]) -> C64 {
        let counts: Vec<usize> = nodes_per_channel.iter().map(Vec::len).collect();
        self.sector(&counts).map_or(ZERO, |s| s[self.index_of(nodes_per_channel)])
    }

    /// Calls `f(nodes_per_channel, weight, amplitude)` for every stored tuple
    /// with nonzero quadrature weight. The weight is `Π w / Π k!`.
    pub fn for_each(&self, mut f: impl FnMut(&[Vec<usize>], f64, C64)) {
        let active = self.quadrature.active_nodes();
        for (counts, amps) in &self.sectors {
            let mut tuple: Vec<Vec<usize>> = counts.iter().map(|&m| Vec::with_capacity(m)).collect();
            self.walk_sector(counts, 0, &active, &mut tuple, 1.0, amps, &mut f);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn walk_sector(
        &self,
        counts: &[usize],
        channel: usize,
        active: &[usize],
        tuple: &mut Vec<Vec<usize>>,
        weight: f64,
        amps: &[C64],
        f: &mut impl FnMut(&[Vec<usize>], f64, C64),
    ) {
        if channel == counts.len() {
            f(tuple, weight, amps[self.index_of(tuple)]);
            return;
        }
        if tuple[channel].len() == counts[channel] {
            self.walk_sector(counts, channel + 1, active, tuple, weight, amps, f);
            return;
        }
        let start = tuple[channel].last().copied();
        let from = start.map_or(0, |s| active.partition_point(|&n| n < s));
        for &n in &active[from..] {
            let repeats = tuple[channel].iter().rev().take_while(|&&x| x == n).count();
            let w = weight * self.quadrature.weight(n) / (repeats + 1) as f64;
            tuple[channel].push(n);
            self.walk_sector(counts, channel, active, tuple, w, amps, f);
            tuple[channel].pop();
        }
    }

    /// `P_m` for `m = 0..=n_max_photons`.
    pub fn photocounts(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.n_max_photons + 1];
        for (counts, amps) in &self.sectors {
            let m: usize = counts.iter().sum();
            if m == 0 {
                p[0] += amps[0].norm_sqr();
            }
        }
        self.for_each(|tuple, w, a| {
            let m: usize = tuple.iter().map(Vec::len).sum();
            if m > 0 {
                p[m] += w * a.norm_sqr();
            }
        });
        p
    }
}

fn sector_len(n_nodes: usize, counts: &[usize]) -> Option<usize> {
    counts.iter().try_fold(1usize, |acc, &m| acc.checked_mul(multiset_count(n_nodes, m)?))
}

/// `P_m` of a scattered state.
pub fn photocounts(state: &ScatteredState) -> Vec<f64> {
    state.photocounts()
}

/// Assembly settings for [`scattered_state_with`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScatterOptions {
    pub n_max_photons: usize,
    pub rule: QuadratureRule,
    /// Restrict storage to these count vectors (all sectors up to
    /// `n_max_photons` when `None`).
    pub sectors: Option<Vec<Vec<usize>>>,
}

impl ScatterOptions {
    pub fn new(n_max_photons: usize) -> Self {
        Self { n_max_photons, rule: QuadratureRule::default(), sectors: None }
    }
}

/// Largest number of amplitudes a single assembly may allocate.
pub const MAX_AMPLITUDES: usize = 1 << 28;

/// All amplitudes with up to `n_max_photons` photons.
pub fn scattered_state(gridp: &PropagatorGrid, n_max_photons: usize) -> Result<ScatteredState> {
    scattered_state_with(gridp, &ScatterOptions::new(n_max_photons))
}

pub fn scattered_state_with(gridp: &PropagatorGrid, options: &ScatterOptions) -> Result<ScatteredState> {
    let rows = TerminalRows::asymptotic(gridp, 0)?;
    let end_node = gridp.grid().n_nodes() - 1;
    let quadrature = Quadrature::new(gridp.grid(), options.rule);
    assemble(gridp, &rows, end_node, quadrature, options)
}

/// Joint system-field amplitudes at time `t` (a bin edge), one state per
/// system basis index. Photons are restricted to `[0, t]`.
pub fn snapshot_states(gridp: &PropagatorGrid, t: f64, options: &ScatterOptions) -> Result<Vec<ScatteredState>> {
    let end_node = gridp.grid().node_of(t)?;
    let quadrature = Quadrature::on(gridp.grid(), options.rule, end_node)?;
    (0..gridp.model().dim())
        .map(|k| {
            let rows = TerminalRows::at_node(gridp, k, end_node);
            assemble(gridp, &rows, end_node, quadrature.clone(), options)
        })
        .collect()
}

fn all_sectors(n_channels: usize, n_max: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0; n_channels];
    fn rec(c: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if c == cur.len() {
            out.push(cur.clone());
            return;
        }
        for m in 0..=left {
            cur[c] = m;
            rec(c + 1, left - m, cur, out);
        }
        cur[c] = 0;
    }
    rec(0, n_max, &mut cur, &mut out);
    out
}

struct Assembly<'a> {
    gridp: &'a PropagatorGrid,
    rows: &'a TerminalRows,
    end_node: usize,
    weights: &'a [f64],
    n_max: usize,
    sector_ids: BTreeMap<Vec<usize>, u32>,
    strides: Vec<Vec<usize>>,
    binom: Binomials,
    caps: Vec<usize>,
}

type Entry = (u32, usize, C64);

impl Assembly<'_> {
    fn allowed(&self, counts: &[usize]) -> bool {
        self.sector_ids.keys().any(|s| s.iter().zip(counts).all(|(a, b)| b <= a))
    }

    fn emit(&self, counts: &[usize], ranks: &[usize], last: usize, phi: &[C64], out: &mut Vec<Entry>) {
        if let Some(&id) = self.sector_ids.get(counts) {
            let amp = self.rows.close(last, phi);
            if amp != ZERO {
                let idx = ranks.iter().zip(&self.strides[id as usize]).map(|(r, s)| r * s).sum();
                out.push((id, idx, amp));
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn grow(
        &self,
        phi: &[C64],
        last: usize,
        min_channel: usize,
        depth: usize,
        counts: &mut [usize],
        ranks: &mut [usize],
        out: &mut Vec<Entry>,
    ) {
        self.emit(counts, ranks, last, phi, out);
        if depth == self.n_max {
            return;
        }
        let mut psi = phi.to_vec();
        let mut scratch = vec![ZERO; psi.len()];
        let mut child = vec![ZERO; psi.len()];
        for n in last..=self.end_node {
            if n > last {
                self.gridp.step(n - 1).apply_into(&psi, &mut scratch);
                std::mem::swap(&mut psi, &mut scratch);
                if psi.iter().all(|&x| x == ZERO) {
                    break;
                }
            }
            if self.weights[n] == 0.0 {
                continue;
            }
            let first = if n == last { min_channel } else { 0 };
            self.branch(&psi, n, first, depth, counts, ranks, &mut child, out);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn branch(
        &self,
        psi: &[C64],
        n: usize,
        first_channel: usize,
        depth: usize,
        counts: &mut [usize],
        ranks: &mut [usize],
        child: &mut [C64],
        out: &mut Vec<Entry>,
    ) {
        for c in first_channel..counts.len() {
            if self.caps[c] <= counts[c] {
                continue;
            }
            counts[c] += 1;
            if !self.allowed(counts) {
                counts[c] -= 1;
                continue;
            }
            apply_jump(self.gridp, c, psi, child);
            if child.iter().all(|&x| x == ZERO) {
                counts[c] -= 1;
                continue;
            }
            let j = counts[c] - 1;
            let before = ranks[c];
            ranks[c] += self.binom.get(n + j, j + 1);
            let next = child.to_vec();
            self.grow(&next, n, c, depth + 1, counts, ranks, out);
            ranks[c] = before;
            counts[c] -= 1;
        }
    }
}

fn assemble(
    gridp: &PropagatorGrid,
    rows: &TerminalRows,
    end_node: usize,
    quadrature: Quadrature,
    options: &ScatterOptions,
) -> Result<ScatteredState> {
    let model = gridp.model();
    let grid = *gridp.grid();
    let n_channels = model.n_channels();
    let n_nodes = grid.n_nodes();
    let wanted = match &options.sectors {
        Some(list) => {
            for s in list {
                if s.len() != n_channels {
                    return Err(invalid(format!("sector {s:?} does not have {n_channels} channels")));
                }
            }
            list.clone()
        }
        None => all_sectors(n_channels, options.n_max_photons),
    };
    let mut sectors: BTreeMap<Vec<usize>, ()> = BTreeMap::new();
    let mut total = 0usize;
    for s in &wanted {
        let len = sector_len(n_nodes, s).ok_or_else(|| invalid(format!("sector {s:?} is too large")))?;
        total = total.saturating_add(len);
        sectors.insert(s.clone(), ());
    }
    if total > MAX_AMPLITUDES {
        return Err(invalid(format!(
            "requested sectors hold {total} amplitudes, more than the limit {MAX_AMPLITUDES}"
        )));
    }
    let n_max = wanted.iter().map(|s| s.iter().sum::<usize>()).max().unwrap_or(0);
    let caps = (0..n_channels).map(|c| wanted.iter().map(|s| s[c]).max().unwrap_or(0)).collect();
    let sector_ids: BTreeMap<Vec<usize>, u32> =
        sectors.keys().enumerate().map(|(i, k)| (k.clone(), i as u32)).collect();
    let strides = sector_ids
        .keys()
        .map(|counts| {
            let mut strides = vec![1usize; n_channels];
            for c in (0..n_channels.saturating_sub(1)).rev() {
                strides[c] = strides[c + 1] * multiset_count(n_nodes, counts[c + 1]).unwrap_or(0);
            }
            strides
        })
        .collect();
    let binom = Binomials::new(n_nodes + n_max, n_max + 1);
    let asm = Assembly {
        gridp,
        rows,
        end_node,
        weights: quadrature.weights(),
        n_max,
        sector_ids,
        strides,
        binom: binom.clone(),
        caps,
    };

    // State before the first jump, at every node.
    let dim = model.dim();
    let mut before = vec![model.initial_state().amplitudes().to_vec()];
    for n in 0..end_node {
        before.push(gridp.step(n).apply(&before[n]));
    }

    let mut root = Vec::new();
    asm.emit(&vec![0; n_channels], &vec![0; n_channels], 0, &before[0], &mut root);
    let chunks: Vec<Vec<Entry>> = (0..=end_node)
        .into_par_iter()
        .filter(|&n| asm.weights[n] != 0.0 && n_max > 0)
        .map(|n| {
            let mut out = Vec::new();
            let mut counts = vec![0; n_channels];
            let mut ranks = vec![0; n_channels];
            let mut child = vec![ZERO; dim];
            asm.branch(&before[n], n, 0, 0, &mut counts, &mut ranks, &mut child, &mut out);
            out
        })
        .collect();

    let mut arrays: Vec<Vec<C64>> =
        asm.sector_ids.keys().map(|s| vec![ZERO; sector_len(n_nodes, s).unwrap_or(0)]).collect();
    for (id, idx, amp) in root.into_iter().chain(chunks.into_iter().flatten()) {
        arrays[id as usize][idx] = amp;
    }
    let sectors = asm.sector_ids.keys().cloned().zip(arrays).collect();
    let n_max_photons = n_max;
    Ok(ScatteredState { grid, quadrature, n_channels, n_max_photons, sectors, binom })
}

/// `out = a·x·a†` for a dense row-major `x`.
fn jump_sandwich(a: &SparseOperator, x: &[C64], dim: usize, tmp: &mut [C64], out: &mut [C64]) {
    tmp.fill(ZERO);
    for (r, i, v) in a.entries() {
        let src = &x[i * dim..(i + 1) * dim];
        for (t, s) in tmp[r * dim..(r + 1) * dim].iter_mut().zip(src) {
            *t += v * s;
        }
    }
    out.fill(ZERO);
    for (c, j, u) in a.entries() {
        let u = u.conj();
        for r in 0..dim {
            out[r * dim + c] += tmp[r * dim + j] * u;
        }
    }
}

/// Photocount distribution `P_0..P_n_max` by propagating count-resolved
/// unnormalized density operators, without storing amplitudes.
pub fn photocounts_by_recursion(gridp: &PropagatorGrid, n_max: usize, rule: QuadratureRule) -> Result<Vec<f64>> {
    let model = gridp.model();
    let grid = gridp.grid();
    let dim = model.dim();
    let rows = TerminalRows::asymptotic(gridp, 0)?;
    let quad = Quadrature::new(grid, rule);
    let psi0 = model.initial_state().amplitudes();
    let mut sigma: Vec<Vec<C64>> = vec![vec![ZERO; dim * dim]; n_max + 1];
    for r in 0..dim {
        for c in 0..dim {
            sigma[0][r * dim + c] = psi0[r] * psi0[c].conj();
        }
    }
    let expect = |row: &[C64], s: &[C64]| -> f64 {
        let mut acc = ZERO;
        for r in 0..dim {
            if row[r] == ZERO {
                continue;
            }
            let inner: C64 = (0..dim).map(|c| s[r * dim + c] * row[c].conj()).sum();
            acc += row[r] * inner;
        }
        acc.re
    };
    let mut p = vec![0.0; n_max + 1];
    p[0] = expect(rows.row(0), &sigma[0]);
    let mut scratch = vec![ZERO; dim * dim];
    let mut tmp = vec![ZERO; dim * dim];
    for n in 0..grid.n_nodes() {
        let w = quad.weight(n);
        if w != 0.0 && n_max > 0 {
            let before: Vec<Vec<C64>> = sigma.clone();
            for c in 0..model.n_channels() {
                let gamma = model.rate(c);
                if gamma == 0.0 {
                    continue;
                }
                let jump = model.jump(c);
                let mut next = sigma.clone();
                for j in 0..n_max {
                    // (w^k / k!)·J^k[σ_j] is accumulated into σ_{j+k}
                    let mut term = sigma[j].clone();
                    for k in 1..=(n_max - j) {
                        jump_sandwich(jump, &term, dim, &mut tmp, &mut scratch);
                        let f = w * gamma / k as f64;
                        for (t, s) in term.iter_mut().zip(&scratch) {
                            *t = s * f;
                        }
                        for (dst, t) in next[j + k].iter_mut().zip(&term) {
                            *dst += t;
                        }
                    }
                }
                sigma = next;
            }
            for m in 1..=n_max {
                let delta: Vec<C64> = sigma[m].iter().zip(&before[m]).map(|(a, b)| a - b).collect();
                p[m] += expect(rows.row(n), &delta);
            }
        }
        if n + 1 < grid.n_nodes() {
            let step = gridp.step(n);
            for s in sigma.iter_mut() {
                step.conjugate_into(s, &mut scratch, &mut tmp);
                std::mem::swap(s, &mut tmp);
            }
        }
    }
    Ok(p)
}
