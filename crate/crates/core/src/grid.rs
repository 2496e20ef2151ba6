//! Time lattice and emission-time quadrature.
//!
//! A grid of `B` bins of width `dt` carries `2B + 1` nodes at half-bin
//! spacing: even nodes are bin edges, odd nodes bin midpoints. Emission times
//! live on nodes; the quadrature rule assigns each node a weight.

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    n_bins: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_bins: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid(format!("grid: dt must be > 0, got {dt}")));
        }
        if n_bins == 0 {
            return Err(invalid("grid: at least one bin is required"));
        }
        Ok(Self { dt, n_bins })
    }

    /// Smallest grid of width `dt` reaching `horizon`.
    pub fn covering(dt: f64, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid(format!("grid: horizon must be > 0, got {horizon}")));
        }
        let bins = (horizon / dt - 1e-9).ceil().max(1.0);
        Self::new(dt, bins as usize)
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    #[inline]
    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    #[inline]
    pub fn t_end(&self) -> f64 {
        self.n_bins as f64 * self.dt
    }

    /// Number of half-bin nodes, `2B + 1`.
    #[inline]
    pub fn n_nodes(&self) -> usize {
        2 * self.n_bins + 1
    }

    #[inline]
    pub fn half_step(&self) -> f64 {
        0.5 * self.dt
    }

    #[inline]
    pub fn node_time(&self, node: usize) -> f64 {
        node as f64 * 0.5 * self.dt
    }

    /// Nearest node to `t`; times outside `[0, t_end]` are rejected.
    pub fn node_of(&self, t: f64) -> Result<usize> {
        let tol = 1e-9 * self.dt;
        if !t.is_finite() || t < -tol || t > self.t_end() + tol {
            return Err(invalid(format!("time {t} lies outside the grid [0, {}]", self.t_end())));
        }
        Ok(((t / self.half_step()).round() as usize).min(self.n_nodes() - 1))
    }

    /// Nearest bin edge to `t`, as a bin index.
    pub fn edge_of(&self, t: f64) -> Result<usize> {
        self.node_of(t)?;
        Ok(((t / self.dt).round() as usize).min(self.n_bins))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum QuadratureRule {
    /// Composite Simpson over each bin (edges and midpoint).
    #[default]
    Simpson,
    /// One point per bin at its midpoint.
    Midpoint,
}

/// Per-node weights of a one-dimensional rule; products of these (divided by
/// the factorials of repeated same-channel nodes) integrate over the ordered
/// emission-time simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadrature {
    rule: QuadratureRule,
    weights: Vec<f64>,
}

impl Quadrature {
    pub fn new(grid: &TimeGrid, rule: QuadratureRule) -> Self {
        Self::on(grid, rule, grid.n_nodes() - 1).expect("full grid ends on a bin edge")
    }

    /// Rule on `[0, t(end_node)]`; `end_node` must be a bin edge. Nodes past
    /// the end carry weight zero.
    pub fn on(grid: &TimeGrid, rule: QuadratureRule, end_node: usize) -> Result<Self> {
        if !end_node.is_multiple_of(2) || end_node >= grid.n_nodes() {
            return Err(invalid(format!("quadrature end node {end_node} is not a bin edge of the grid")));
        }
        let dt = grid.dt();
        let mut weights = vec![0.0; grid.n_nodes()];
        for bin in 0..end_node / 2 {
            let (l, m, r) = (2 * bin, 2 * bin + 1, 2 * bin + 2);
            match rule {
                QuadratureRule::Simpson => {
                    weights[l] += dt / 6.0;
                    weights[m] += 4.0 * dt / 6.0;
                    weights[r] += dt / 6.0;
                }
                QuadratureRule::Midpoint => weights[m] += dt,
            }
        }
        Ok(Self { rule, weights })
    }

    pub fn rule(&self) -> QuadratureRule {
        self.rule
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, node: usize) -> f64 {
        self.weights[node]
    }

    /// Nodes with nonzero weight, ascending.
    pub fn active_nodes(&self) -> Vec<usize> {
        (0..self.weights.len()).filter(|&n| self.weights[n] != 0.0).collect()
    }
}
