//! Score functions, the adaptive M-estimate threshold, zero attractors and
//! proximal operators.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Threshold multiplier giving a 99% acceptance region for Gaussian errors.
pub const DEFAULT_KAPPA: f64 = 2.576;

/// Robust running estimate of the error variance and the derived threshold.
///
/// Each update pushes `e²` into a window of the last `N_w` values and sets
/// `σ̂² ← ζ·σ̂² + (1 − ζ)·median(window)`, using `ζ = 0` on the very first
/// update. The threshold is `ξ = κ·σ̂`.
#[derive(Debug, Clone)]
pub struct ThresholdState {
    window: VecDeque<f64>,
    capacity: usize,
    sigma_sq: f64,
    zeta: f64,
    kappa: f64,
    started: bool,
    scratch: Vec<f64>,
}

impl ThresholdState {
    pub fn new(window: usize, zeta: f64, kappa: f64) -> Result<Self> {
        if window == 0 {
            return Err(invalid("threshold window must hold at least one sample"));
        }
        if !(0.0..1.0).contains(&zeta) {
            return Err(invalid(format!("forgetting factor {zeta} outside [0, 1)")));
        }
        if !(kappa > 0.0) {
            return Err(invalid(format!("kappa must be positive, got {kappa}")));
        }
        Ok(ThresholdState {
            window: VecDeque::with_capacity(window),
            capacity: window,
            sigma_sq: 0.0,
            zeta,
            kappa,
            started: false,
            scratch: Vec::with_capacity(window),
        })
    }

    /// Push a new error and return the refreshed threshold.
    pub fn update(&mut self, e: f64) -> f64 {
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(e * e);
        let med = self.median();
        let zeta = if self.started { self.zeta } else { 0.0 };
        self.sigma_sq = zeta * self.sigma_sq + (1.0 - zeta) * med;
        self.started = true;
        self.threshold()
    }

    pub fn threshold(&self) -> f64 {
        if self.kappa.is_infinite() {
            f64::INFINITY
        } else {
            self.kappa * self.sigma_sq.sqrt()
        }
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }

    /// Overwrite the variance estimate, e.g. to resume from a known state.
    pub fn set_sigma_sq(&mut self, sigma_sq: f64) {
        self.sigma_sq = sigma_sq;
        self.started = true;
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    fn median(&mut self) -> f64 {
        self.scratch.clear();
        self.scratch.extend(self.window.iter().copied());
        median_in_place(&mut self.scratch)
    }
}

/// Median with the even-length convention of averaging the central pair.
pub fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    assert!(n > 0, "median of an empty window");
    let mid = n / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower_max = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower_max + upper)
    }
}

/// Modified Huber score: pass the error through below the threshold, zero above.
pub fn mh_score(e: f64, xi: f64) -> f64 {
    if e.abs() < xi {
        e
    } else {
        0.0
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn default_hampel_a() -> f64 {
    1.0
}
fn default_hampel_b() -> f64 {
    1.5
}
fn default_hampel_c() -> f64 {
    3.0
}

/// Score function `φ′(e)` applied to the a-priori error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreFunction {
    /// `φ′(e) = e`; plain least-mean-squares.
    Identity,
    /// Identity below the adaptive threshold, zero above.
    ModifiedHuber,
    Sign,
    /// Least mean p-power, `|e|^{p−1} sign(e)`.
    Lmp {
        p: f64,
    },
    /// Least logarithmic absolute difference.
    Llad {
        alpha: f64,
    },
    /// Huber with a fixed clipping point `b`.
    HuberFixed {
        b: f64,
    },
    /// Huber whose clipping point is the adaptive threshold.
    HuberAdaptive,
    /// Three-part redescending score with knots at multiples of the
    /// adaptive threshold.
    Hampel {
        #[serde(default = "default_hampel_a")]
        a: f64,
        #[serde(default = "default_hampel_b")]
        b: f64,
        #[serde(default = "default_hampel_c")]
        c: f64,
    },
}

impl ScoreFunction {
    pub fn hampel() -> Self {
        ScoreFunction::Hampel {
            a: default_hampel_a(),
            b: default_hampel_b(),
            c: default_hampel_c(),
        }
    }

    /// Whether the score consumes the adaptive threshold.
    pub fn is_adaptive(&self) -> bool {
        matches!(
            self,
            ScoreFunction::ModifiedHuber | ScoreFunction::HuberAdaptive | ScoreFunction::Hampel { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ScoreFunction::Lmp { p } if !(p > 1.0 && p < 2.0) => Err(invalid(format!("LMP order {p} outside (1, 2)"))),
            ScoreFunction::Llad { alpha } if !(alpha > 0.0) => {
                Err(invalid(format!("LLAD alpha must be positive, got {alpha}")))
            }
            ScoreFunction::HuberFixed { b } if !(b > 0.0) => Err(invalid(format!("Huber b must be positive, got {b}"))),
            ScoreFunction::Hampel { a, b, c } if !(0.0 < a && a <= b && b < c) => Err(invalid(format!(
                "Hampel knots must satisfy 0 < a <= b < c, got {a}, {b}, {c}"
            ))),
            _ => Ok(()),
        }
    }

    /// Evaluate `φ′(e)`; `xi` is ignored by non-adaptive scores.
    pub fn evaluate(&self, e: f64, xi: f64) -> f64 {
        match *self {
            ScoreFunction::Identity => e,
            ScoreFunction::ModifiedHuber => mh_score(e, xi),
            ScoreFunction::Sign => sign(e),
            ScoreFunction::Lmp { p } => e.abs().powf(p - 1.0) * sign(e),
            ScoreFunction::Llad { alpha } => {
                let a = alpha * e.abs();
                a / (1.0 + a) * sign(e)
            }
            ScoreFunction::HuberFixed { b } => huber(e, b),
            ScoreFunction::HuberAdaptive => huber(e, xi),
            ScoreFunction::Hampel { a, b, c } => {
                let (a, b, c) = (a * xi, b * xi, c * xi);
                let m = e.abs();
                if m < a {
                    e
                } else if m < b {
                    a * sign(e)
                } else if m < c {
                    a * (c - m) / (c - b) * sign(e)
                } else {
                    0.0
                }
            }
        }
    }
}

fn huber(e: f64, b: f64) -> f64 {
    if e.abs() < b {
        e
    } else {
        b * sign(e)
    }
}

/// Free-standing form of [`ScoreFunction::evaluate`].
pub fn score(kind: &ScoreFunction, e: f64, xi: f64) -> f64 {
    kind.evaluate(e, xi)
}

/// Exact exponential form or its first-order Taylor surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExpForm {
    Exact,
    #[default]
    Taylor,
}

/// Sparsity-promoting term `f(w)`, or a proximal operator selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttractorConfig {
    /// `sign(w)`.
    L1,
    /// `sign(w) / (ε + |w|)`.
    ReweightedL1 { epsilon: f64 },
    /// `υ sign(w) e^{−υ|w|}` or its piecewise-linear surrogate.
    ExpL0 {
        upsilon: f64,
        #[serde(default)]
        form: ExpForm,
    },
    /// `p sign(w) / (ε + |w|^{1−p})`, `0 < p < 1`.
    LpNorm { p: f64, epsilon: f64 },
    /// `υ² w e^{−υ² w² / 2}`.
    Gaussian { upsilon: f64 },
    /// Polynomial surrogate supported on `|w| ≤ 1/(υ − 1)`, `υ > 1`.
    Polynomial { upsilon: f64 },
    /// Proximal step of the ℓ1 penalty.
    SoftThreshold,
    /// Proximal step of the exponential ℓ0 surrogate.
    WeightedSoftThreshold { upsilon: f64 },
}

impl AttractorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be positive, got {v}")))
            }
        };
        match *self {
            AttractorConfig::L1 | AttractorConfig::SoftThreshold => Ok(()),
            AttractorConfig::ReweightedL1 { epsilon } => positive("epsilon", epsilon),
            AttractorConfig::ExpL0 { upsilon, .. }
            | AttractorConfig::Gaussian { upsilon }
            | AttractorConfig::WeightedSoftThreshold { upsilon } => positive("upsilon", upsilon),
            AttractorConfig::LpNorm { p, epsilon } => {
                if !(p > 0.0 && p < 1.0) {
                    return Err(invalid(format!("p must lie in (0, 1), got {p}")));
                }
                positive("epsilon", epsilon)
            }
            AttractorConfig::Polynomial { upsilon } => {
                if upsilon > 1.0 && upsilon.is_finite() {
                    Ok(())
                } else {
                    Err(invalid(format!("polynomial upsilon must exceed 1, got {upsilon}")))
                }
            }
        }
    }

    pub fn is_proximal(&self) -> bool {
        matches!(
            self,
            AttractorConfig::SoftThreshold | AttractorConfig::WeightedSoftThreshold { .. }
        )
    }

    /// Element-wise attractor value. Proximal selectors have no gradient
    /// form and return 0.
    pub fn evaluate(&self, w: f64) -> f64 {
        match *self {
            AttractorConfig::L1 => sign(w),
            AttractorConfig::ReweightedL1 { epsilon } => sign(w) / (epsilon + w.abs()),
            AttractorConfig::ExpL0 {
                upsilon,
                form: ExpForm::Exact,
            } => upsilon * sign(w) * (-upsilon * w.abs()).exp(),
            AttractorConfig::ExpL0 {
                upsilon,
                form: ExpForm::Taylor,
            } => exp_l0_taylor(w, upsilon),
            AttractorConfig::LpNorm { p, epsilon } => p * sign(w) / (epsilon + w.abs().powf(1.0 - p)),
            AttractorConfig::Gaussian { upsilon } => {
                let u2 = upsilon * upsilon;
                u2 * w * (-0.5 * u2 * w * w).exp()
            }
            AttractorConfig::Polynomial { upsilon } => {
                let m = w.abs();
                if w != 0.0 && m <= 1.0 / (upsilon - 1.0) {
                    sign(w) * (1.0 - (upsilon - 1.0) * m) / (1.0 + m).powf(upsilon + 1.0)
                } else {
                    0.0
                }
            }
            AttractorConfig::SoftThreshold | AttractorConfig::WeightedSoftThreshold { .. } => 0.0,
        }
    }
}

/// First-order Taylor surrogate of `υ sign(w) e^{−υ|w|}`, supported on
/// `[−1/υ, 1/υ]` with closed ends and zero at the origin.
pub fn exp_l0_taylor(w: f64, upsilon: f64) -> f64 {
    let h = 1.0 / upsilon;
    if w > 0.0 && w <= h {
        -upsilon * upsilon * w + upsilon
    } else if w < 0.0 && w >= -h {
        -upsilon * upsilon * w - upsilon
    } else {
        0.0
    }
}

/// Apply the attractor to every coefficient of `w`.
pub fn zero_attractor(cfg: &AttractorConfig, w: &[f64]) -> Vec<f64> {
    w.iter().map(|&x| cfg.evaluate(x)).collect()
}

/// `max(|v| − z, 0)·sign(v)` element-wise.
pub fn soft_threshold(v: &[f64], z: f64) -> Vec<f64> {
    v.iter().map(|&x| shrink(x, z)).collect()
}

fn shrink(x: f64, z: f64) -> f64 {
    (x.abs() - z).max(0.0) * sign(x)
}

/// Weight of the proximal ℓ0 step: `υ²v + υ` on `[−1/υ, 0)`, `−υ²v + υ` on
/// `(0, 1/υ]`, zero elsewhere.
pub fn proximal_weight(v: f64, upsilon: f64) -> f64 {
    let h = 1.0 / upsilon;
    if v > 0.0 && v <= h {
        -upsilon * upsilon * v + upsilon
    } else if v < 0.0 && v >= -h {
        upsilon * upsilon * v + upsilon
    } else {
        0.0
    }
}

/// `max(|v| − μβ·f_Ψ(v), 0)·sign(v)` element-wise.
pub fn weighted_soft_threshold(v: &[f64], mu_beta: f64, upsilon: f64) -> Vec<f64> {
    v.iter()
        .map(|&x| shrink(x, mu_beta * proximal_weight(x, upsilon)))
        .collect()
}

/// In-place proximal step selected by `cfg` with strength `mu_beta`.
pub(crate) fn apply_proximal(cfg: &AttractorConfig, v: &mut [f64], mu_beta: f64) {
    match *cfg {
        AttractorConfig::SoftThreshold => {
            for x in v.iter_mut() {
                *x = shrink(*x, mu_beta);
            }
        }
        AttractorConfig::WeightedSoftThreshold { upsilon } => {
            for x in v.iter_mut() {
                *x = shrink(*x, mu_beta * proximal_weight(*x, upsilon));
            }
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn threshold_first_call_uses_zeta_zero() {
        let mut s = ThresholdState::new(5, 0.99, DEFAULT_KAPPA).unwrap();
        let xi = s.update(3.0);
        assert_eq!(s.sigma_sq(), 9.0);
        assert!((xi - 7.728).abs() < 1e-12);
    }

    #[test]
    fn threshold_full_window_recursion() {
        let mut s = ThresholdState::new(5, 0.99, DEFAULT_KAPPA).unwrap();
        for e in [1.0, 2.0, 3.0, 4.0, 5.0] {
            s.update(e);
        }
        s.set_sigma_sq(9.0);
        // window now {4, 9, 16, 25, 36}: median 16
        s.update(6.0);
        assert!((s.sigma_sq() - (0.99 * 9.0 + 0.01 * 16.0)).abs() < 1e-12);

        let mut t = ThresholdState::new(5, 0.99, DEFAULT_KAPPA).unwrap();
        for e in [1.0, 2.0, 3.0, 4.0] {
            t.update(e);
        }
        t.set_sigma_sq(9.0);
        t.update(5.0);
        assert!((t.sigma_sq() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn even_median_averages_central_pair() {
        assert_eq!(median_in_place(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median_in_place(&mut [7.0]), 7.0);
    }

    #[test]
    fn single_outlier_barely_moves_median() {
        let mut a = ThresholdState::new(9, 0.0, DEFAULT_KAPPA).unwrap();
        let mut b = a.clone();
        let errs = [0.1, -0.2, 0.15, 0.05, -0.12, 0.3, -0.07, 0.22, 0.18];
        for &e in &errs[..8] {
            a.update(e);
            b.update(e);
        }
        a.update(errs[8]);
        b.update(1e6);
        let mut sq: Vec<f64> = errs.iter().map(|e| e * e).collect();
        sq.sort_by(f64::total_cmp);
        // one order statistic at most
        assert!(b.sigma_sq() <= sq[5] && b.sigma_sq() >= sq[4]);
        assert!(a.sigma_sq() >= sq[3] && a.sigma_sq() <= sq[4]);
    }

    #[test]
    fn mh_examples() {
        assert_eq!(mh_score(0.5, 1.0), 0.5);
        assert_eq!(mh_score(1.5, 1.0), 0.0);
        assert_eq!(mh_score(0.0, 3.0), 0.0);
        assert_eq!(mh_score(1e300, f64::INFINITY), 1e300);
    }

    #[test]
    fn score_examples() {
        assert_eq!(score(&ScoreFunction::Sign, -3.2, 0.0), -1.0);
        assert!((score(&ScoreFunction::Lmp { p: 1.5 }, 4.0, 0.0) - 2.0).abs() < 1e-15);
        assert_eq!(score(&ScoreFunction::HuberFixed { b: 0.4 }, 5.0, 0.0), 0.4);
        assert!((score(&ScoreFunction::Llad { alpha: 1.0 }, 1.0, 0.0) - 0.5).abs() < 1e-15);
        let h = ScoreFunction::hampel();
        assert_eq!(h.evaluate(0.5, 1.0), 0.5);
        assert_eq!(h.evaluate(1.2, 1.0), 1.0);
        assert!((h.evaluate(2.25, 1.0) - 0.5).abs() < 1e-15);
        assert_eq!(h.evaluate(3.5, 1.0), 0.0);
    }

    #[test]
    fn taylor_attractor_examples() {
        let cfg = AttractorConfig::ExpL0 {
            upsilon: 20.0,
            form: ExpForm::Taylor,
        };
        assert!((cfg.evaluate(0.02) - 12.0).abs() < 1e-12);
        assert_eq!(cfg.evaluate(0.1), 0.0);
        assert_eq!(cfg.evaluate(0.0), 0.0);
        // closed boundary uses the linear branch, which is zero there
        assert_eq!(cfg.evaluate(0.05), 0.0);
        assert!((cfg.evaluate(-0.02) + 12.0).abs() < 1e-12);
    }

    #[test]
    fn every_attractor_vanishes_at_origin() {
        let cfgs = [
            AttractorConfig::L1,
            AttractorConfig::ReweightedL1 { epsilon: 0.1 },
            AttractorConfig::ExpL0 {
                upsilon: 5.0,
                form: ExpForm::Exact,
            },
            AttractorConfig::ExpL0 {
                upsilon: 5.0,
                form: ExpForm::Taylor,
            },
            AttractorConfig::LpNorm { p: 0.5, epsilon: 0.1 },
            AttractorConfig::Gaussian { upsilon: 5.0 },
            AttractorConfig::Polynomial { upsilon: 5.0 },
        ];
        for cfg in cfgs {
            assert_eq!(cfg.evaluate(0.0), 0.0, "{cfg:?}");
            assert!((cfg.evaluate(0.013) + cfg.evaluate(-0.013)).abs() < 1e-12);
        }
    }

    #[test]
    fn taylor_tracks_exact_near_origin() {
        let upsilon = 20.0;
        for k in 1..=100 {
            let w = 0.2 / upsilon * k as f64 / 100.0;
            let exact = upsilon * (-upsilon * w).exp();
            let approx = exp_l0_taylor(w, upsilon);
            assert!((approx - exact).abs() / exact < 0.03, "w={w}");
        }
        assert!((exp_l0_taylor(1e-12, upsilon) - upsilon).abs() < 1e-6);
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&[3.0, -0.5], 1.0), vec![2.0, 0.0]);
        assert_eq!(soft_threshold(&[3.0, -0.5], 0.0), vec![3.0, -0.5]);
        assert_eq!(soft_threshold(&[0.0, 0.0], 2.0), vec![0.0, 0.0]);
    }

    #[test]
    fn weighted_soft_threshold_examples() {
        assert_eq!(weighted_soft_threshold(&[0.5], 1e-3, 20.0), vec![0.5]);
        let out = weighted_soft_threshold(&[0.02], 1e-3, 20.0);
        assert!((out[0] - 0.008).abs() < 1e-15);
        assert_eq!(weighted_soft_threshold(&[0.02, -0.3], 0.0, 20.0), vec![0.02, -0.3]);
    }

    proptest! {
        #[test]
        fn scores_are_odd(e in -1e3f64..1e3, xi in 0.01f64..10.0) {
            let kinds = [
                ScoreFunction::Identity,
                ScoreFunction::ModifiedHuber,
                ScoreFunction::Sign,
                ScoreFunction::Lmp { p: 1.3 },
                ScoreFunction::Llad { alpha: 0.7 },
                ScoreFunction::HuberFixed { b: 0.4 },
                ScoreFunction::HuberAdaptive,
                ScoreFunction::hampel(),
            ];
            for k in kinds {
                prop_assert_eq!(k.evaluate(-e, xi), -k.evaluate(e, xi));
            }
        }

        #[test]
        fn clipped_scores_are_bounded(e in -1e6f64..1e6, xi in 0.01f64..10.0) {
            prop_assert!(ScoreFunction::ModifiedHuber.evaluate(e, xi).abs() < xi);
            prop_assert!(ScoreFunction::HuberAdaptive.evaluate(e, xi).abs() <= xi);
            prop_assert!(ScoreFunction::hampel().evaluate(e, xi).abs() <= xi);
            let fixed = ScoreFunction::HuberFixed { b: 0.4 };
            prop_assert!(fixed.evaluate(e, xi).abs() <= 0.4);
        }

        #[test]
        fn unit_weight_reduces_to_soft_threshold(v in proptest::collection::vec(-2.0f64..2.0, 1..8), z in 0.0f64..1.0) {
            let unit: Vec<f64> = v.iter().map(|&x| shrink(x, z * 1.0)).collect();
            prop_assert_eq!(unit, soft_threshold(&v, z));
        }

        #[test]
        fn window_never_exceeds_capacity(errs in proptest::collection::vec(-10.0f64..10.0, 1..40), nw in 1usize..12) {
            let mut s = ThresholdState::new(nw, 0.9, DEFAULT_KAPPA).unwrap();
            for e in errs {
                s.update(e);
                prop_assert!(s.len() <= nw);
                prop_assert!(s.sigma_sq() >= 0.0);
            }
        }
    }
}
