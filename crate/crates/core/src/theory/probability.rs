//! Probability that the modified Huber score accepts a sample.

use std::f64::consts::SQRT_2;

use crate::error::{invalid, Result};

/// Acceptance probability for Gaussian error components.
///
/// With impulse probability `p`, the error is `e_θ` (variance
/// `sigma_etheta²`) or `e_s` (variance `sigma_es²`). The threshold is
/// `ξ = κ·σ_{eθ}`.
pub fn update_probability(p: f64, sigma_es: f64, sigma_etheta: f64, kappa: f64) -> Result<f64> {
    check_p(p)?;
    if !(sigma_es > 0.0 && sigma_etheta > 0.0) {
        return Err(invalid("error standard deviations must be positive"));
    }
    let xi = kappa * sigma_etheta;
    Ok(p * libm::erf(xi / (SQRT_2 * sigma_es)) + (1.0 - p) * libm::erf(xi / (SQRT_2 * sigma_etheta)))
}

/// Steady-state acceptance probability, where the error variances reduce to
/// the background and impulse-corrupted noise variances.
pub fn steady_update_probability(p: f64, sigma_theta: f64, sigma_s: f64, kappa: f64) -> Result<f64> {
    check_p(p)?;
    if !(sigma_theta > 0.0) || sigma_s < sigma_theta {
        return Err(invalid("need sigma_s >= sigma_theta > 0"));
    }
    Ok(p * libm::erf(kappa * sigma_theta / (SQRT_2 * sigma_s)) + (1.0 - p) * libm::erf(kappa / SQRT_2))
}

fn check_p(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(format!("impulse probability {p} outside [0, 1]")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KAPPA: f64 = 2.576;

    #[test]
    fn no_impulses_gives_99_percent() {
        let p = update_probability(0.0, 1.0, 1.0, KAPPA).unwrap();
        assert!((p - 0.990).abs() < 5e-4);
        let s = steady_update_probability(0.0, 0.1, 10.0, KAPPA).unwrap();
        assert!((s - 0.990).abs() < 5e-4);
    }

    #[test]
    fn certain_huge_impulses_vanish() {
        let p = update_probability(1.0, 1e12, 1.0, KAPPA).unwrap();
        assert!(p < 1e-11 && p > 0.0);
    }

    #[test]
    fn transient_example() {
        let theta = 0.1f64;
        let s = (1e4f64 + 1.0).sqrt() * theta;
        let p = update_probability(0.01, s, theta, KAPPA).unwrap();
        assert!((p - 0.9803).abs() < 1e-4, "{p}");
    }

    #[test]
    fn steady_examples() {
        let theta = 0.2f64;
        let s = (1e4f64 + 1.0).sqrt() * theta;
        let p = steady_update_probability(0.05, theta, s, KAPPA).unwrap();
        assert!((p - 0.9415).abs() < 1e-4, "{p}");
        let equal = steady_update_probability(0.7, 0.3, 0.3, KAPPA).unwrap();
        assert!((equal - libm::erf(KAPPA / SQRT_2)).abs() < 1e-15);
    }

    #[test]
    fn monotone_in_p_and_kappa() {
        let mut last = f64::INFINITY;
        for i in 0..=10 {
            let p = update_probability(i as f64 / 10.0, 50.0, 1.0, KAPPA).unwrap();
            assert!(p < last);
            last = p;
        }
        let mut last = 0.0;
        for i in 1..=10 {
            let p = update_probability(0.1, 50.0, 1.0, 0.5 * i as f64).unwrap();
            assert!(p > last && p <= 1.0);
            last = p;
        }
    }
}
