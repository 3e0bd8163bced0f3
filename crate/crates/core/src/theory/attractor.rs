//! Gaussian moments of the piecewise-linear ℓ0 attractor and the network
//! cross-moment matrices built from them.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

/// Smallest variance used when a model variance comes out non-positive.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// `E{f(x)}`, `E{x f(x)}`, `E{f²(x)}` for Gaussian `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentTriple {
    pub ef: f64,
    pub exf: f64,
    pub eff: f64,
}

/// Partial moments `∫_lo^hi x^n φ(x) dx`, n = 0, 1, 2, of `N(mean, sd²)`.
fn partial_moments(lo: f64, hi: f64, mean: f64, sd: f64) -> [f64; 3] {
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
    // interval mass without cancellation in either tail
    let m0 = if a >= 0.0 {
        0.5 * (libm::erfc(a * FRAC_1_SQRT_2) - libm::erfc(b * FRAC_1_SQRT_2))
    } else if b <= 0.0 {
        0.5 * (libm::erfc(-b * FRAC_1_SQRT_2) - libm::erfc(-a * FRAC_1_SQRT_2))
    } else {
        0.5 * (libm::erf(b * FRAC_1_SQRT_2) - libm::erf(a * FRAC_1_SQRT_2))
    };
    let (pa, pb) = (pdf(a), pdf(b));
    let ez = pa - pb;
    let ez2 = m0 + a * pa - b * pb;
    let m1 = mean * m0 + sd * ez;
    let m2 = mean * mean * m0 + 2.0 * mean * sd * ez + sd * sd * ez2;
    [m0, m1, m2]
}

/// Moments of the Taylor-form attractor `f(x) = s·υ − υ² x` on the band
/// `0 < s·x ≤ 1/υ` (zero elsewhere) for `x ~ N(x_bar, sigma_x²)`.
pub fn attractor_moments(x_bar: f64, sigma_x: f64, upsilon: f64) -> Result<MomentTriple> {
    if !(sigma_x > 0.0) {
        return Err(invalid(format!("sigma_x must be positive, got {sigma_x}")));
    }
    if !(upsilon > 0.0) {
        return Err(invalid(format!("upsilon must be positive, got {upsilon}")));
    }
    let h = 1.0 / upsilon;
    let u2 = upsilon * upsilon;
    let mut out = MomentTriple {
        ef: 0.0,
        exf: 0.0,
        eff: 0.0,
    };
    for (s, lo, hi) in [(1.0, 0.0, h), (-1.0, -h, 0.0)] {
        let [m0, m1, m2] = partial_moments(lo, hi, x_bar, sigma_x);
        out.ef += s * upsilon * m0 - u2 * m1;
        out.exf += s * upsilon * m1 - u2 * m2;
        out.eff += u2 * m0 - 2.0 * s * upsilon * u2 * m1 + u2 * u2 * m2;
    }
    Ok(out)
}

/// Network moments of the attractor under the Gaussian and separability
/// approximations.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossMoments {
    /// `E{f(w)}`, length `NL`.
    pub ef: DVector<f64>,
    /// `E{w̃ fᵀ(w)}`.
    pub x: DMatrix<f64>,
    /// `E{f(w) fᵀ(w)}`.
    pub pi: DMatrix<f64>,
}

/// Build `E{f}`, `E{w̃ fᵀ}` and `E{f fᵀ}` from the error mean `E{w̃}` and
/// second moment `W`.
///
/// Each estimate coefficient is Gaussian with mean `w°_l − E{w̃}_j` and
/// variance `W_jj − E{w̃}_j²`. Entries coupling different coefficients
/// factor into products of marginal means; entries coupling the same
/// coefficient at two different nodes use the average of the two marginal
/// moments.
pub fn cross_moment_matrices(
    w_o: &[f64],
    mean_error: &DVector<f64>,
    w: &DMatrix<f64>,
    upsilon: f64,
) -> Result<CrossMoments> {
    let l = w_o.len();
    let nl = mean_error.len();
    if l == 0 || !nl.is_multiple_of(l) || w.nrows() != nl || w.ncols() != nl {
        return Err(invalid("inconsistent dimensions for cross moments"));
    }
    let mut mean_w = DVector::zeros(nl);
    let mut triples = Vec::with_capacity(nl);
    for j in 0..nl {
        let x_bar = w_o[j % l] - mean_error[j];
        let var = (w[(j, j)] - mean_error[j] * mean_error[j]).max(VARIANCE_FLOOR);
        mean_w[j] = x_bar;
        triples.push(attractor_moments(x_bar, var.sqrt(), upsilon)?);
    }
    let ef = DVector::from_iterator(nl, triples.iter().map(|t| t.ef));
    let mut xi = DMatrix::zeros(nl, nl);
    let mut pi = DMatrix::zeros(nl, nl);
    for a in 0..nl {
        for b in 0..nl {
            let (xab, pab) = if a % l != b % l {
                (mean_w[a] * ef[b], ef[a] * ef[b])
            } else if a == b {
                (triples[a].exf, triples[a].eff)
            } else {
                (
                    0.5 * (triples[a].exf + triples[b].exf),
                    0.5 * (triples[a].eff + triples[b].eff),
                )
            };
            xi[(a, b)] = xab;
            pi[(a, b)] = pab;
        }
    }
    // E{w̃ fᵀ} = (1 ⊗ w°) E{f}ᵀ − E{w fᵀ}
    let truth = DVector::from_fn(nl, |j, _| w_o[j % l]);
    let x = &truth * ef.transpose() - xi;
    Ok(CrossMoments { ef, x, pi })
}
