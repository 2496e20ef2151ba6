//! Closed forms for a two-level emitter driven by a square pulse.
//!
//! During the pulse the no-jump generator is constant, so
//! `⟨1|U(τ)|0⟩ = e^{−γτ/4}(Ω/Ω′)sin Ω′τ` and
//! `⟨0|U(τ)|0⟩ = e^{−γτ/4}(cos Ω′τ + (γ/4)sin(Ω′τ)/Ω′)` with the generalized
//! Rabi frequency `Ω′ = √(Ω² − (γ/4)²)`. Ω′ is complex below `γ/4`; one code
//! path covers both regimes. Amplitudes are in the rotating frame.

use crate::error::{invalid, Result};
use crate::hilbert::{C64, ZERO};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TlsParams {
    pub gamma: f64,
    pub omega: f64,
    pub t_pulse: f64,
}

impl TlsParams {
    pub fn new(gamma: f64, omega: f64, t_pulse: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(invalid("gamma must be >= 0"));
        }
        if !(t_pulse.is_finite() && t_pulse >= 0.0) {
            return Err(invalid("t_pulse must be >= 0"));
        }
        if !omega.is_finite() {
            return Err(invalid("omega must be finite"));
        }
        Ok(Self { gamma, omega, t_pulse })
    }

    /// Parameters for pulse area `A_R = 2ΩT_P`.
    pub fn from_area(gamma: f64, area: f64, t_pulse: f64) -> Result<Self> {
        if !(t_pulse > 0.0) {
            return Err(invalid("t_pulse must be > 0 to define an area"));
        }
        Self::new(gamma, area / (2.0 * t_pulse), t_pulse)
    }

    pub fn omega_prime(&self) -> C64 {
        C64::new(self.omega * self.omega - (self.gamma / 4.0).powi(2), 0.0).sqrt()
    }

    pub fn area(&self) -> f64 {
        2.0 * self.omega * self.t_pulse
    }

    /// `sin(Ω′τ)/Ω′`, regular at `Ω′ = 0`.
    fn sin_over(&self, tau: f64) -> C64 {
        let w = self.omega_prime();
        let z = w * tau;
        if z.norm() < 1e-4 {
            let z2 = z * z;
            (C64::new(1.0, 0.0) - z2 / 6.0 + z2 * z2 / 120.0) * tau
        } else {
            z.sin() / w
        }
    }

    /// `⟨1|U(τ)|0⟩` under constant drive.
    pub fn excite(&self, tau: f64) -> C64 {
        (-self.gamma * tau / 4.0).exp() * self.omega * self.sin_over(tau)
    }

    /// `⟨0|U(τ)|0⟩` under constant drive.
    pub fn stay(&self, tau: f64) -> C64 {
        let w = self.omega_prime();
        (-self.gamma * tau / 4.0).exp() * ((w * tau).cos() + self.gamma / 4.0 * self.sin_over(tau))
    }
}

/// Amplitude of `m = taus.len()` photons emitted at the given ordered times,
/// starting from the ground state.
pub fn tls_amplitude(params: &TlsParams, taus: &[f64]) -> C64 {
    let tp = params.t_pulse;
    let m = taus.len();
    if m == 0 {
        return params.stay(tp);
    }
    let prefactor = params.gamma.powf(m as f64 / 2.0);
    let mut prev = 0.0;
    let mut product = C64::new(prefactor, 0.0);
    for &tau in &taus[..m - 1] {
        if tau > tp {
            return ZERO;
        }
        product *= params.excite(tau - prev);
        prev = tau;
    }
    let last = taus[m - 1];
    if last <= tp {
        product * params.excite(last - prev) * params.stay(tp - last)
    } else {
        product * params.excite(tp - prev) * (-params.gamma * (last - tp) / 2.0).exp()
    }
}

/// Leading-order (in `γT_P`) photocount probabilities `P_0`, `P_1`, `P_2`.
pub fn tls_pm_closed(params: &TlsParams, m: usize) -> Result<f64> {
    let a = params.area();
    let x = params.gamma * params.t_pulse;
    let decay = (-x / 2.0).exp();
    // sin(A)/A and sin(A/2)/A, regular at A = 0
    let sinc = |y: f64| if y.abs() < 1e-8 { 1.0 - y * y / 6.0 } else { y.sin() / y };
    match m {
        0 => {
            let inner = (a / 2.0).cos() + x / 4.0 * sinc(a / 2.0);
            Ok(decay * inner * inner)
        }
        1 => Ok(0.5 * decay * (1.0 - a.cos() + x / 2.0 * (1.0 - a.cos() / 2.0 - sinc(a) / 2.0))),
        2 => Ok(x / 8.0 * decay * (2.0 + a.cos() - 3.0 * sinc(a))),
        _ => Err(invalid(format!("closed-form photocounts exist for m <= 2, got {m}"))),
    }
}

/// `P_0 = e^{−γT_P/2}|cos Ω′T_P + (γ/4)sin(Ω′T_P)/Ω′|²` without approximation.
pub fn tls_p0_exact(params: &TlsParams) -> f64 {
    params.stay(params.t_pulse).norm_sqr()
}

/// Spontaneous-emission amplitude `√γ·e^{−γτ/2}` of an initially excited emitter.
pub fn spont_amplitude(gamma: f64, tau: f64) -> C64 {
    C64::new(gamma.sqrt() * (-gamma * tau / 2.0).exp(), 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn late_single_emission() {
        let p = TlsParams::from_area(1.0, PI, 0.2).unwrap();
        let tau = 0.9;
        let w = p.omega_prime();
        let expected = (-(tau - 0.2) / 2.0f64).exp() * (-0.2f64 / 4.0).exp() * p.omega * (w * 0.2).sin() / w;
        assert!((tls_amplitude(&p, &[tau]) - expected).norm() < 1e-15);
    }

    #[test]
    fn coincident_pair_vanishes() {
        let p = TlsParams::from_area(1.0, 3.0 * PI, 0.5).unwrap();
        assert_eq!(tls_amplitude(&p, &[0.1, 0.3, 0.3]).norm(), 0.0);
        assert_eq!(tls_amplitude(&p, &[0.6, 0.6]).norm(), 0.0);
    }

    #[test]
    fn weak_drive_branch_is_real_positive() {
        let gamma = 1.0;
        let omega = gamma / 8.0;
        let tp = 2.0;
        let p = TlsParams::new(gamma, omega, tp).unwrap();
        let w = p.omega_prime();
        assert!(w.re.abs() < 1e-15 && w.im > 0.0);
        let k = w.im;
        let a = tls_amplitude(&p, &[3.0]);
        let expected =
            gamma.sqrt() * (-gamma * 1.0 / 2.0f64).exp() * (-gamma * tp / 4.0).exp() * omega / k * (k * tp).sinh();
        assert!(a.im.abs() < 1e-15);
        assert!(a.re > 0.0);
        assert!((a.re - expected).abs() < 1e-14);
    }

    #[test]
    fn generalized_frequency_identity() {
        for &(g, o) in &[(1.0, 3.0), (1.0, 0.1), (4.0, 1.0), (0.0, 2.0)] {
            let p = TlsParams::new(g, o, 1.0).unwrap();
            let w = p.omega_prime();
            assert!((w * w + (g / 4.0) * (g / 4.0) - o * o).norm() < 1e-12);
        }
    }

    #[test]
    fn critical_damping_is_regular() {
        let p = TlsParams::new(4.0, 1.0, 0.5).unwrap();
        assert_eq!(p.omega_prime(), ZERO);
        let a = tls_amplitude(&p, &[0.7]);
        assert!(a.re.is_finite() && a.re > 0.0);
    }

    #[test]
    fn table_values_at_pi_and_two_pi() {
        let x = 0.2;
        let pi = TlsParams::from_area(1.0, PI, x).unwrap();
        let e = (x / 2.0f64).exp();
        assert!((tls_pm_closed(&pi, 1).unwrap() * e - (1.0 + 0.375 * x)).abs() < 1e-12);
        assert!((tls_pm_closed(&pi, 2).unwrap() * e - x / 8.0).abs() < 1e-12);
        let two = TlsParams::from_area(1.0, 2.0 * PI, x).unwrap();
        assert!((tls_pm_closed(&two, 1).unwrap() * e - x / 8.0).abs() < 1e-12);
        assert!((tls_pm_closed(&two, 2).unwrap() * e - 3.0 * x / 8.0).abs() < 1e-12);
        let ratio = tls_pm_closed(&two, 2).unwrap() / tls_pm_closed(&two, 1).unwrap();
        assert!((ratio - 3.0).abs() < 1e-12);
    }

    #[test]
    fn no_drive_limit() {
        let p = TlsParams::new(1.0, 0.0, 0.02).unwrap();
        assert!((tls_pm_closed(&p, 0).unwrap() - 1.0).abs() < 1e-3);
        assert!(tls_pm_closed(&p, 1).unwrap().abs() < 1e-12);
        assert!(tls_pm_closed(&p, 2).unwrap().abs() < 1e-12);
        assert!((tls_p0_exact(&p) - 1.0).abs() < 1e-14);
        assert!(tls_pm_closed(&p, 3).is_err());
    }

    #[test]
    fn spontaneous_amplitude() {
        assert!((spont_amplitude(2.0, 0.0).re - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(spont_amplitude(0.0, 1.0), ZERO);
        // ∫|√γ e^{−γτ/2}|² dτ by Simpson on [0, 40/γ]
        let (g, n) = (1.5, 20000);
        let h = 40.0 / g / n as f64;
        let f = |i: usize| spont_amplitude(g, i as f64 * h).norm_sqr();
        let s: f64 = (0..=n)
            .map(|i| {
                f(i) * if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                }
            })
            .sum::<f64>()
            * h
            / 3.0;
        assert!((s - 1.0).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn continuous_across_pulse_end(
            area in 0.1f64..20.0, gamma in 0.1f64..3.0, t1 in 0.0f64..1.0
        ) {
            let tp = 1.0;
            let p = TlsParams::from_area(gamma, area, tp).unwrap();
            let early = t1 * tp;
            let inside = tls_amplitude(&p, &[early, tp]);
            let left = p.excite(early) * p.excite(tp - early) * gamma;
            prop_assert!((inside - left).norm() < 1e-12 * left.norm().max(1.0));
            let just_after = tls_amplitude(&p, &[early, tp * (1.0 + 1e-13)]);
            prop_assert!((inside - just_after).norm() < 1e-11);
        }
    }
}
