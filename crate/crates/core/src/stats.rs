//! Goodness-of-fit tests used to compare trajectory ensembles with
//! quadrature results.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

/// Pearson chi-square of observed counts against expected probabilities
/// (`probabilities` are renormalized; degrees of freedom `k − 1`).
pub fn chi_square(observed: &[usize], probabilities: &[f64]) -> Result<TestOutcome> {
    if observed.len() != probabilities.len() || observed.len() < 2 {
        return Err(invalid("chi_square: need at least two matching categories"));
    }
    if probabilities.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(invalid("chi_square: expected probabilities must be positive"));
    }
    let n: usize = observed.iter().sum();
    let total: f64 = probabilities.iter().sum();
    let statistic: f64 = observed
        .iter()
        .zip(probabilities)
        .map(|(&o, &p)| {
            let e = n as f64 * p / total;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new((observed.len() - 1) as f64).map_err(|e| invalid(e.to_string()))?;
    Ok(TestOutcome { statistic, p_value: dist.sf(statistic) })
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn kolmogorov_smirnov(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestOutcome> {
    if samples.is_empty() {
        return Err(invalid("kolmogorov_smirnov: no samples"));
    }
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let statistic = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    Ok(TestOutcome { statistic, p_value: kolmogorov_sf(statistic, x.len()) })
}

/// Asymptotic `P(D_n > d)` with the small-sample correction of the
/// effective `λ`.
pub fn kolmogorov_sf(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kolmogorov_reference_quantiles() {
        // λ = 1.3581 is the 5% point, 1.6276 the 1% point
        let n = 1_000_000;
        let at = |lambda: f64| kolmogorov_sf(lambda / ((n as f64).sqrt() + 0.12), n);
        assert!((at(1.3581) - 0.05).abs() < 2e-4);
        assert!((at(1.6276) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn uniform_samples_pass_and_shifted_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: Vec<f64> = (0..5000).map(|_| rng.random()).collect();
        assert!(kolmogorov_smirnov(&u, |x| x.clamp(0.0, 1.0)).unwrap().p_value > 0.01);
        let shifted: Vec<f64> = u.iter().map(|x| x * 0.9).collect();
        assert!(kolmogorov_smirnov(&shifted, |x| x.clamp(0.0, 1.0)).unwrap().p_value < 1e-6);
    }

    #[test]
    fn chi_square_matches_table() {
        let out = chi_square(&[50, 30, 20], &[0.5, 0.3, 0.2]).unwrap();
        assert_eq!(out.statistic, 0.0);
        assert!((out.p_value - 1.0).abs() < 1e-12);
        let out = chi_square(&[60, 40], &[0.5, 0.5]).unwrap();
        assert!((out.statistic - 4.0).abs() < 1e-12);
        assert!((out.p_value - 0.0455).abs() < 1e-4);
        assert!(chi_square(&[1, 2], &[0.5, 0.0]).is_err());
    }
}
