//! End-to-end checks through the public API.

use std::f64::consts::PI;

use approx::assert_relative_eq;
use proptest::prelude::*;

use wgqed::analytic_tls::{spont_amplitude, tls_amplitude, tls_p0_exact, TlsParams};
use wgqed::grid::{QuadratureRule, TimeGrid};
use wgqed::heisenberg::heisenberg_amplitude;
use wgqed::model::{build_tls, TlsInitial};
use wgqed::observables::{flux_trace, g2_grid};
use wgqed::propagator::{build_grid, GridOptions, PropagatorGrid};
use wgqed::scattering::{amplitude, photocounts_by_recursion, scattered_state, EmissionRecord};

fn tls_grid(area: f64, t_pulse: f64, dt: f64, horizon: f64) -> PropagatorGrid {
    let model = build_tls(1.0, area / (2.0 * t_pulse), t_pulse, TlsInitial::Ground).unwrap();
    build_grid(&model, TimeGrid::covering(dt, horizon).unwrap(), GridOptions::default()).unwrap()
}

#[test]
fn spontaneous_emission_amplitude() {
    let model = build_tls(1.0, 0.0, 0.0, TlsInitial::Excited).unwrap();
    let gridp = build_grid(&model, TimeGrid::covering(0.05, 10.0).unwrap(), GridOptions::default()).unwrap();
    for t in [0.0, 0.5, 2.25, 7.0] {
        let a = amplitude(&gridp, &EmissionRecord::single_channel(vec![t]).unwrap()).unwrap();
        assert_relative_eq!(a.re, spont_amplitude(1.0, t).re, epsilon = 1e-12);
        assert!(a.im.abs() < 1e-12);
    }
}

#[test]
fn flux_integrates_to_mean_photon_number() {
    let gridp = tls_grid(2.0 * PI, 0.5, 0.05, 10.0);
    let state = scattered_state(&gridp, 3).unwrap();
    let w = state.quadrature().weights().to_vec();
    let flux = flux_trace(&state, None);
    let integral: f64 = flux.iter().zip(&w).map(|(f, w)| f * w).sum();
    let mean: f64 = state.photocounts().iter().enumerate().map(|(m, p)| m as f64 * p).sum();
    assert_relative_eq!(integral, mean, max_relative = 1e-12);
    let g = g2_grid(&state, None);
    for a in 0..g.len() {
        for b in 0..g.len() {
            assert_eq!(g[a][b], g[b][a]);
            assert!(g[a][b] >= 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn vacuum_probability_matches_closed_form(area in 0.1f64..4.0 * PI, t_pulse in 0.1f64..1.0) {
        let gridp = tls_grid(area, t_pulse, t_pulse / 10.0, 25.0);
        let p = photocounts_by_recursion(&gridp, 2, QuadratureRule::Simpson).unwrap();
        let exact = tls_p0_exact(&TlsParams::from_area(1.0, area, t_pulse).unwrap());
        prop_assert!((p[0] - exact).abs() < 1e-10, "{} vs {}", p[0], exact);
    }

    #[test]
    fn heisenberg_and_schrodinger_amplitudes_agree(
        area in 0.5f64..3.0 * PI,
        picks in proptest::collection::vec(0usize..60, 1..4),
    ) {
        let gridp = tls_grid(area, 1.0, 0.05, 3.0);
        let mut nodes = picks;
        nodes.sort_unstable();
        let grid = *gridp.grid();
        let times: Vec<f64> = nodes.iter().map(|&n| grid.node_time(n)).collect();
        let record = EmissionRecord::single_channel(times.clone()).unwrap();
        let s = amplitude(&gridp, &record).unwrap();
        let h = heisenberg_amplitude(&gridp, &record).unwrap();
        prop_assert!((s - h).norm() < 1e-10 * s.norm().max(1.0));
        if times.iter().all(|&t| t <= 1.0) {
            let exact = tls_amplitude(&TlsParams::from_area(1.0, area, 1.0).unwrap(), &times);
            prop_assert!((s - exact).norm() < 1e-6, "{s} vs {exact}");
        }
    }
}
