//! Amplitudes assembled from Heisenberg-like system operators.
//!
//! With `ã(τ) = U(0, τ) a U(τ, 0)` the amplitude of an ordered record is
//! `⟨0|U(T, 0) Π_k √γ_k ã_k(τ_k)|ψ₀⟩`, later operators to the left. The
//! generic route builds `ã` from forward and backward propagators. For the
//! pair source `ã₁, ã₂` stay linear in the mode operators, so the one-photon-
//! per-waveguide amplitude reduces to the α coefficients and two vacuum
//! matrix elements of the pulse propagator.

use crate::error::{invalid, Result};
use crate::hilbert::{Operator, C64, ZERO};
use crate::model::ModelKind;
use crate::propagator::{alpha_coefficients_with, propagator_between, AlphaCoefficients, PropagatorGrid};
use crate::scattering::{validate_record, EmissionRecord, TerminalRows};

/// `ã_c(τ_node)` as a dense operator.
pub fn heisenberg_operator(gridp: &PropagatorGrid, channel: usize, node: usize) -> Result<Operator> {
    let model = gridp.model();
    if channel >= model.n_channels() {
        return Err(invalid(format!("channel {channel} does not exist")));
    }
    let forward = gridp.node_interval(0, node)?.to_dense();
    let tau = gridp.grid().node_time(node);
    let steps = gridp.options().per_half_step() * node.max(1);
    let backward = propagator_between(model, tau, 0.0, steps, gridp.options().method).to_dense();
    let a = model.couplings()[channel].operator();
    Ok(backward.matmul(&a.matmul(&forward)))
}

/// Record amplitude through the Heisenberg-like operators; agrees with
/// [`crate::scattering::amplitude`] up to integration error.
pub fn heisenberg_amplitude(gridp: &PropagatorGrid, record: &EmissionRecord) -> Result<C64> {
    let model = gridp.model();
    let nodes = validate_record(gridp, record)?;
    let mut psi = model.initial_state().amplitudes().to_vec();
    for (&node, &c) in nodes.iter().zip(record.channels()) {
        let op = heisenberg_operator(gridp, c, node)?;
        let s = model.couplings()[c].rate().sqrt();
        let mut next = vec![ZERO; psi.len()];
        op.apply_into(&psi, &mut next);
        psi = next.into_iter().map(|x| x * s).collect();
    }
    // ⟨0|U(T, 0) = ⟨0|U(T, τ_last) U(τ_last, 0)
    let last = nodes.last().copied().unwrap_or(0);
    let rows = TerminalRows::asymptotic(gridp, 0)?;
    let head = gridp.node_interval(0, last)?.apply(&psi);
    Ok(rows.close(last, &head))
}

/// One-photon-per-waveguide amplitudes of the pair source from the α
/// coefficients.
#[derive(Clone, Debug)]
pub struct PairTwoPhoton {
    alpha: AlphaCoefficients,
    c0: C64,
    c_minus: C64,
    scale: f64,
}

impl PairTwoPhoton {
    pub fn new(gridp: &PropagatorGrid) -> Result<Self> {
        let model = gridp.model();
        let ModelKind::PairSource(params) = model.kind() else {
            return Err(invalid("pair amplitudes require a pair-source model"));
        };
        let alpha = alpha_coefficients_with(model, *gridp.grid(), gridp.options())?;
        let rows = TerminalRows::asymptotic(gridp, 0)?;
        let row = rows.row(0);
        // |n₁n₂⟩ sits at n₁(n_max + 1) + n₂
        let c0 = row[0];
        let c_minus = row[params.n_max + 2];
        Ok(Self { alpha, c0, c_minus, scale: (params.gamma1 * params.gamma2).sqrt() })
    }

    /// `⟨00|U(T_P, 0)|00⟩`.
    pub fn c0(&self) -> C64 {
        self.c0
    }

    /// `⟨00|U(T_P, 0)|11⟩`.
    pub fn c_minus(&self) -> C64 {
        self.c_minus
    }

    pub fn alpha(&self) -> &AlphaCoefficients {
        &self.alpha
    }

    /// Amplitude for the waveguide-1 photon at node `n1` and the
    /// waveguide-2 photon at node `n2`.
    pub fn amplitude(&self, n1: usize, n2: usize) -> C64 {
        let a = |i, j, n| self.alpha.alpha(i, j, n);
        let v = if n1 <= n2 {
            a(1, 2, n1) * (a(2, 2, n2) * self.c0 + a(2, 1, n2) * self.c_minus)
        } else {
            a(2, 1, n2) * (a(1, 1, n1) * self.c0 + a(1, 2, n1) * self.c_minus)
        };
        v * self.scale
    }

    /// All amplitudes, row-major over `(n1, n2)` like the `(1, 1)` sector of a
    /// scattered state.
    pub fn matrix(&self) -> Vec<C64> {
        let n = self.alpha.grid().n_nodes();
        let mut out = vec![ZERO; n * n];
        for n1 in 0..n {
            for n2 in 0..n {
                out[n1 * n + n2] = self.amplitude(n1, n2);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic_tls::{tls_amplitude, TlsParams};
    use crate::grid::TimeGrid;
    use crate::model::{build_pair_source, build_tls, TlsInitial};
    use crate::propagator::{build_grid, GridOptions};
    use crate::scattering::amplitude;

    #[test]
    fn tls_route_matches_closed_form() {
        let m = build_tls(1.0, 2.0, 1.0, TlsInitial::Ground).unwrap();
        let g = build_grid(&m, TimeGrid::new(0.05, 60).unwrap(), GridOptions::default()).unwrap();
        let p = TlsParams::new(1.0, 2.0, 1.0).unwrap();
        for taus in [vec![0.3], vec![1.7], vec![0.2, 0.65], vec![0.5, 2.0], vec![1.2, 2.5]] {
            let rec = EmissionRecord::single_channel(taus.clone()).unwrap();
            let h = heisenberg_amplitude(&g, &rec).unwrap();
            let exact = tls_amplitude(&p, &taus);
            assert!((h - exact).norm() < 1e-10, "{taus:?}: {h} vs {exact}");
            assert!((h - amplitude(&g, &rec).unwrap()).norm() < 1e-10);
        }
    }

    #[test]
    fn pair_route_matches_propagator_assembly() {
        // the α route is exact in the untruncated modes, so n_max must be
        // large enough for the ladder truncation to drop below the tolerance
        let m = build_pair_source(1.0, 1.0, 0.2, 1.0, 1.0, 10).unwrap();
        let g = build_grid(&m, TimeGrid::new(0.05, 50).unwrap(), GridOptions::default()).unwrap();
        let pair = PairTwoPhoton::new(&g).unwrap();
        for &(n1, n2) in &[(5, 30), (30, 5), (12, 12), (0, 40), (60, 61), (90, 3)] {
            let (t1, t2) = (g.grid().node_time(n1), g.grid().node_time(n2));
            let rec = if t1 <= t2 {
                EmissionRecord::new(vec![t1, t2], vec![0, 1]).unwrap()
            } else {
                EmissionRecord::new(vec![t2, t1], vec![1, 0]).unwrap()
            };
            let direct = amplitude(&g, &rec).unwrap();
            let h = pair.amplitude(n1, n2);
            assert!((h - direct).norm() < 1e-10, "({n1},{n2}): {h} vs {direct}");
        }
    }

    #[test]
    fn pair_route_rejects_other_models() {
        let m = build_tls(1.0, 2.0, 1.0, TlsInitial::Ground).unwrap();
        let g = build_grid(&m, TimeGrid::new(0.1, 20).unwrap(), GridOptions::default()).unwrap();
        assert!(PairTwoPhoton::new(&g).is_err());
        assert!(heisenberg_operator(&g, 1, 0).is_err());
    }
}
