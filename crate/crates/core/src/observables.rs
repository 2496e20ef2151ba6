//! Detector-facing quantities derived from a scattered state.
//!
//! Flux and G² are sums over every way the field's photons can produce a
//! detection (or a pair of detections) at the given node(s). On the quadrature
//! lattice a tuple with `c_a` photons at node `a` contributes
//! `W·|φ|²·c_a / w_a` to the flux there, and `c_a·c_b / (w_a·w_b)` (or
//! `c_a(c_a − 1) / w_a²` on the diagonal) to G², so that the quadrature sums
//! reproduce `Σ m·P_m` and `Σ m(m−1)·P_m`.

use nalgebra::DMatrix;

use crate::error::{invalid, undefined, Result};
use crate::hilbert::C64;
use crate::scattering::ScatteredState;

/// Multiplicity of each node in a tuple, optionally restricted to one channel.
fn multiplicities(tuple: &[Vec<usize>], channel: Option<usize>) -> Vec<(usize, usize)> {
    let mut nodes: Vec<usize> = match channel {
        Some(c) => tuple.get(c).cloned().unwrap_or_default(),
        None => tuple.iter().flatten().copied().collect(),
    };
    nodes.sort_unstable();
    let mut out: Vec<(usize, usize)> = Vec::new();
    for n in nodes {
        match out.last_mut() {
            Some((last, count)) if *last == n => *count += 1,
            _ => out.push((n, 1)),
        }
    }
    out
}

/// Photon flux at every node, summed over channels or for one channel.
pub fn flux_trace(state: &ScatteredState, channel: Option<usize>) -> Vec<f64> {
    let w = state.quadrature().weights();
    let mut flux = vec![0.0; state.grid().n_nodes()];
    state.for_each(|tuple, weight, amp| {
        let p = weight * amp.norm_sqr();
        if p == 0.0 {
            return;
        }
        for (a, c) in multiplicities(tuple, channel) {
            flux[a] += p * c as f64 / w[a];
        }
    });
    flux
}

/// Total photon flux at time `t` (snapped to the nearest node).
pub fn flux(state: &ScatteredState, t: f64) -> Result<f64> {
    let node = state.grid().node_of(t)?;
    if state.quadrature().weight(node) == 0.0 {
        return Err(invalid(format!("time {t} is not an emission node of the quadrature")));
    }
    Ok(flux_trace(state, None)[node])
}

/// Second-order correlation `G²(t₁, t₂)` on the node lattice (row-major,
/// `n_nodes × n_nodes`), summed over channels or for one channel.
pub fn g2_grid(state: &ScatteredState, channel: Option<usize>) -> Vec<Vec<f64>> {
    let n = state.grid().n_nodes();
    let w = state.quadrature().weights();
    let mut g = vec![vec![0.0; n]; n];
    state.for_each(|tuple, weight, amp| {
        let p = weight * amp.norm_sqr();
        if p == 0.0 {
            return;
        }
        let mult = multiplicities(tuple, channel);
        for (i, &(a, ca)) in mult.iter().enumerate() {
            if ca > 1 {
                g[a][a] += p * (ca * (ca - 1)) as f64 / (w[a] * w[a]);
            }
            for &(b, cb) in &mult[i + 1..] {
                let v = p * (ca * cb) as f64 / (w[a] * w[b]);
                g[a][b] += v;
                g[b][a] += v;
            }
        }
    });
    g
}

/// `Σ m(m−1)P_m / (Σ m P_m)²`.
pub fn g2_pulsewise(p: &[f64]) -> Result<f64> {
    let mean: f64 = p.iter().enumerate().map(|(m, x)| m as f64 * x).sum();
    if mean <= 0.0 {
        return Err(undefined("pulse-wise g2 needs a nonzero mean photon number"));
    }
    let pairs: f64 = p.iter().enumerate().map(|(m, x)| (m * m.saturating_sub(1)) as f64 * x).sum();
    Ok(pairs / (mean * mean))
}

/// Two-photon fraction of the non-vacuum output, `P₂ / (1 − P₀)`.
pub fn purity(p: &[f64]) -> Result<f64> {
    let p0 = p.first().copied().unwrap_or(0.0);
    if p0 >= 1.0 - 1e-12 {
        return Err(undefined("purity needs P0 < 1"));
    }
    Ok(p.get(2).copied().unwrap_or(0.0) / (1.0 - p0))
}

/// Schmidt decomposition of the one-photon-per-waveguide component.
#[derive(Clone, Debug, PartialEq)]
pub struct SchmidtSpectrum {
    /// Normalized weights, descending.
    pub lambdas: Vec<f64>,
    /// Participation ratio `1 / Σλ²`.
    pub schmidt_number: f64,
}

/// Spectrum of the `(1, 1)` sector of a two-waveguide state.
pub fn schmidt(state: &ScatteredState) -> Result<SchmidtSpectrum> {
    if state.n_channels() != 2 {
        return Err(invalid("schmidt needs a two-waveguide state"));
    }
    let amps = state.sector(&[1, 1]).ok_or_else(|| undefined("the state has no (1,1) sector"))?;
    let n = state.grid().n_nodes();
    let active = state.quadrature().active_nodes();
    let w = state.quadrature().weights();
    let k = active.len();
    let m = DMatrix::<C64>::from_fn(k, k, |i, j| {
        let (a, b) = (active[i], active[j]);
        amps[a * n + b] * (w[a] * w[b]).sqrt()
    });
    schmidt_from_matrix(m)
}

/// Schmidt weights of a (quadrature-weighted) two-party amplitude matrix.
pub fn schmidt_from_matrix(m: DMatrix<C64>) -> Result<SchmidtSpectrum> {
    let sv = m.singular_values();
    let mut lambdas: Vec<f64> = sv.iter().map(|s| s * s).collect();
    let total: f64 = lambdas.iter().sum();
    if !(total > 0.0) {
        return Err(undefined("the two-photon amplitude vanishes"));
    }
    for l in lambdas.iter_mut() {
        *l /= total;
    }
    lambdas.sort_by(|a, b| b.total_cmp(a));
    let schmidt_number = 1.0 / lambdas.iter().map(|l| l * l).sum::<f64>();
    Ok(SchmidtSpectrum { lambdas, schmidt_number })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Quadrature, QuadratureRule, TimeGrid};
    use crate::hilbert::ZERO;
    use std::collections::BTreeMap;

    fn grid() -> (TimeGrid, Quadrature) {
        let g = TimeGrid::new(0.1, 20).unwrap();
        let q = Quadrature::new(&g, QuadratureRule::Simpson);
        (g, q)
    }

    fn two_channel(f: impl Fn(f64, f64) -> C64) -> ScatteredState {
        let (g, q) = grid();
        let n = g.n_nodes();
        let mut amps = vec![ZERO; n * n];
        for a in 0..n {
            for b in 0..n {
                amps[a * n + b] = f(g.node_time(a), g.node_time(b));
            }
        }
        let mut sectors = BTreeMap::new();
        sectors.insert(vec![0, 0], vec![ZERO]);
        sectors.insert(vec![1, 1], amps);
        ScatteredState::from_sectors(g, q, 2, sectors).unwrap()
    }

    #[test]
    fn single_photon_flux_is_occupation() {
        let (g, q) = grid();
        let n = g.n_nodes();
        let phi: Vec<C64> = (0..n).map(|i| C64::new((-g.node_time(i)).exp(), 0.3)).collect();
        let mut sectors = BTreeMap::new();
        sectors.insert(vec![0], vec![C64::new(0.5, 0.0)]);
        sectors.insert(vec![1], phi.clone());
        let s = ScatteredState::from_sectors(g, q, 1, sectors).unwrap();
        let f = flux_trace(&s, None);
        for i in 0..n {
            assert!((f[i] - phi[i].norm_sqr()).abs() < 1e-14);
        }
        assert!((flux(&s, g.node_time(7)).unwrap() - phi[7].norm_sqr()).abs() < 1e-14);
        assert!(g2_grid(&s, None).iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn vacuum_has_no_flux() {
        let (g, q) = grid();
        let mut sectors = BTreeMap::new();
        sectors.insert(vec![0], vec![C64::new(1.0, 0.0)]);
        let s = ScatteredState::from_sectors(g, q, 1, sectors).unwrap();
        assert!(flux_trace(&s, None).iter().all(|&x| x == 0.0));
        assert_eq!(s.photocounts(), vec![1.0]);
    }

    #[test]
    fn flux_and_g2_sum_rules() {
        let s = two_channel(|a, b| C64::new((-a - 2.0 * b).exp(), (a * b).sin()));
        let p = s.photocounts();
        let w = s.quadrature().weights().to_vec();
        let f = flux_trace(&s, None);
        let integrated: f64 = f.iter().zip(&w).map(|(x, w)| x * w).sum();
        let mean: f64 = p.iter().enumerate().map(|(m, x)| m as f64 * x).sum();
        assert!((integrated - mean).abs() < 1e-12 * mean);
        let g = g2_grid(&s, None);
        let mut pairs = 0.0;
        for (a, row) in g.iter().enumerate() {
            for (b, x) in row.iter().enumerate() {
                pairs += w[a] * w[b] * x;
                assert_eq!(*x, g[b][a]);
            }
        }
        assert!((pairs - 2.0 * p[2]).abs() < 1e-12 * p[2]);
    }

    #[test]
    fn separable_amplitude_has_unit_schmidt_number() {
        let s = two_channel(|a, b| C64::new((-a).exp() * (1.0 + b), 0.0) * C64::new(0.0, b).exp());
        let sp = schmidt(&s).unwrap();
        assert!((sp.schmidt_number - 1.0).abs() < 1e-6);
        assert!((sp.lambdas.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_equal_terms_give_schmidt_number_two() {
        let m = DMatrix::<C64>::from_fn(4, 4, |i, j| if i == j && i < 2 { C64::new(1.0, 0.0) } else { ZERO });
        let sp = schmidt_from_matrix(m).unwrap();
        assert!((sp.schmidt_number - 2.0).abs() < 1e-12);
    }

    #[test]
    fn schmidt_is_phase_invariant() {
        let f = |a: f64, b: f64| C64::new((-(a - b) * (a - b) * 10.0).exp(), 0.0) * (-(a + b)).exp();
        let s1 = schmidt(&two_channel(f)).unwrap();
        let phase = C64::new(0.0, 1.3).exp();
        let s2 = schmidt(&two_channel(|a, b| f(a, b) * phase)).unwrap();
        assert!((s1.schmidt_number - s2.schmidt_number).abs() < 1e-9);
        assert!(s1.schmidt_number > 1.0);
    }

    #[test]
    fn schmidt_rejects_empty_sector() {
        let s = two_channel(|_, _| ZERO);
        assert!(matches!(schmidt(&s), Err(crate::Error::UndefinedValue(_))));
    }

    #[test]
    fn pulsewise_coherence() {
        let mean: f64 = 0.1;
        let mut p: Vec<f64> =
            (0..=6).map(|m| (-mean).exp() * mean.powi(m) / (1..=m).map(|k| k as f64).product::<f64>()).collect();
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= s);
        assert!((g2_pulsewise(&p).unwrap() - 1.0).abs() < 1e-3);
        assert_eq!(g2_pulsewise(&[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(g2_pulsewise(&[0.3, 0.7]).unwrap(), 0.0);
        assert!(matches!(g2_pulsewise(&[1.0, 0.0]), Err(crate::Error::UndefinedValue(_))));
    }

    #[test]
    fn purity_definition() {
        assert!((purity(&[0.5, 0.0, 0.5]).unwrap() - 1.0).abs() < 1e-15);
        assert!((purity(&[0.5, 0.0, 0.25, 0.0, 0.25]).unwrap() - 0.5).abs() < 1e-15);
        assert!(purity(&[1.0, 0.0, 0.0]).is_err());
    }
}
