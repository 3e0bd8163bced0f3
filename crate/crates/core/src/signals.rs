//! Ground truth, regressor streams and additive noise.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::seed::{stream, SeedPath};

/// The unknown parameter vector shared by all nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    w: Vec<f64>,
}

impl GroundTruth {
    /// Accept `w` verbatim. It must have unit Euclidean norm.
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(invalid("ground truth must have at least one entry"));
        }
        let norm = norm(&w);
        if (norm - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("ground truth norm is {norm}, expected 1")));
        }
        Ok(GroundTruth { w })
    }

    /// Rescale `w` to unit norm.
    pub fn normalized(w: Vec<f64>) -> Result<Self> {
        let n = norm(&w);
        if !(n > 0.0) || !n.is_finite() {
            return Err(invalid("ground truth must be a finite nonzero vector"));
        }
        Ok(GroundTruth {
            w: w.into_iter().map(|x| x / n).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    /// Number of nonzero coefficients.
    pub fn sparsity(&self) -> usize {
        self.w.iter().filter(|&&x| x != 0.0).count()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `Q` standard-normal entries at uniformly chosen positions, scaled to unit norm.
pub fn generate_ground_truth(length: usize, nonzero: usize, seed: u64) -> Result<GroundTruth> {
    if length == 0 || nonzero == 0 || nonzero > length {
        return Err(invalid(format!("need 1 <= Q <= L, got Q={nonzero}, L={length}")));
    }
    let mut rng = SeedPath::new(seed).rng();
    let mut w = vec![0.0; length];
    for pos in sample(&mut rng, length, nonzero) {
        let mut x: f64 = StandardNormal.sample(&mut rng);
        // zero has probability zero but would break the sparsity count
        while x == 0.0 {
            x = StandardNormal.sample(&mut rng);
        }
        w[pos] = x;
    }
    GroundTruth::normalized(w)
}

/// `d = uᵀ w° + v`.
pub fn synthesize_output(u: &[f64], w_o: &[f64], v: f64) -> Result<f64> {
    if u.len() != w_o.len() {
        return Err(invalid(format!(
            "regressor length {} does not match ground truth length {}",
            u.len(),
            w_o.len()
        )));
    }
    Ok(dot(u, w_o) + v)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Shape of the impulsive component of contaminated-Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ImpulseShape {
    #[default]
    Gaussian,
    /// Zero-mean Laplacian with the same variance.
    Laplacian,
}

/// Additive measurement noise at one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    Gaussian {
        sigma_theta_sq: f64,
    },
    /// `θ + b·g` with `b ~ Bernoulli(p)`.
    ContaminatedGaussian {
        p: f64,
        sigma_theta_sq: f64,
        sigma_g_sq: f64,
        #[serde(default)]
        shape: ImpulseShape,
    },
    /// Symmetric α-stable noise plus optional Gaussian background.
    AlphaStable {
        alpha: f64,
        gamma: f64,
        #[serde(default)]
        sigma_theta_sq: f64,
    },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Gaussian { sigma_theta_sq } => {
                if !(sigma_theta_sq >= 0.0) {
                    return Err(invalid("sigma_theta_sq must be nonnegative"));
                }
            }
            NoiseModel::ContaminatedGaussian {
                p,
                sigma_theta_sq,
                sigma_g_sq,
                ..
            } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(invalid(format!("impulse probability {p} outside [0, 1]")));
                }
                if !(sigma_theta_sq >= 0.0) || !(sigma_g_sq >= 0.0) {
                    return Err(invalid("noise variances must be nonnegative"));
                }
            }
            NoiseModel::AlphaStable {
                alpha,
                gamma,
                sigma_theta_sq,
            } => {
                if !(alpha > 0.0 && alpha <= 2.0) {
                    return Err(invalid(format!("alpha {alpha} outside (0, 2]")));
                }
                if !(gamma > 0.0) {
                    return Err(invalid(format!("gamma must be positive, got {gamma}")));
                }
                if !(sigma_theta_sq >= 0.0) {
                    return Err(invalid("sigma_theta_sq must be nonnegative"));
                }
            }
        }
        Ok(())
    }

    /// Variance of the Gaussian background component.
    pub fn sigma_theta_sq(&self) -> f64 {
        match *self {
            NoiseModel::Gaussian { sigma_theta_sq }
            | NoiseModel::ContaminatedGaussian { sigma_theta_sq, .. }
            | NoiseModel::AlphaStable { sigma_theta_sq, .. } => sigma_theta_sq,
        }
    }

    /// Impulse probability (zero for pure Gaussian noise).
    pub fn impulse_probability(&self) -> f64 {
        match *self {
            NoiseModel::ContaminatedGaussian { p, .. } => p,
            _ => 0.0,
        }
    }

    /// Variance of an impulse-corrupted sample, `σ²_g + σ²_θ`.
    pub fn sigma_s_sq(&self) -> f64 {
        match *self {
            NoiseModel::ContaminatedGaussian {
                sigma_theta_sq,
                sigma_g_sq,
                ..
            } => sigma_g_sq + sigma_theta_sq,
            _ => self.sigma_theta_sq(),
        }
    }

    /// Population variance; `None` for α-stable noise with α < 2.
    pub fn variance(&self) -> Option<f64> {
        match *self {
            NoiseModel::Gaussian { sigma_theta_sq } => Some(sigma_theta_sq),
            NoiseModel::ContaminatedGaussian { p, .. } => {
                Some(p * self.sigma_s_sq() + (1.0 - p) * self.sigma_theta_sq())
            }
            NoiseModel::AlphaStable {
                alpha,
                gamma,
                sigma_theta_sq,
            } => (alpha == 2.0).then_some(2.0 * gamma + sigma_theta_sq),
        }
    }

    pub fn is_alpha_stable(&self) -> bool {
        matches!(self, NoiseModel::AlphaStable { .. })
    }
}

/// Input statistics and noise of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSignalProfile {
    pub tau: f64,
    pub sigma_eps_sq: f64,
    pub noise: NoiseModel,
}

impl NodeSignalProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau.abs() < 1.0) {
            return Err(invalid(format!(
                "AR(1) coefficient {} must satisfy |tau| < 1",
                self.tau
            )));
        }
        if !(self.sigma_eps_sq > 0.0) {
            return Err(invalid("innovation variance must be positive"));
        }
        self.noise.validate()
    }

    /// Stationary variance `σ²_ε / (1 − τ²)` of the scalar input.
    pub fn input_variance(&self) -> f64 {
        self.sigma_eps_sq / (1.0 - self.tau * self.tau)
    }
}

/// Stationary AR(1) process `u(i) = τ u(i−1) + ε(i)`.
#[derive(Debug, Clone)]
pub struct Ar1 {
    tau: f64,
    sd: f64,
    prev: Option<f64>,
    stationary_sd: f64,
    rng: ChaCha8Rng,
}

impl Ar1 {
    pub fn new(tau: f64, sigma_eps_sq: f64, rng: ChaCha8Rng) -> Self {
        Ar1 {
            tau,
            sd: sigma_eps_sq.sqrt(),
            prev: None,
            stationary_sd: (sigma_eps_sq / (1.0 - tau * tau)).sqrt(),
            rng,
        }
    }

    pub fn next_value(&mut self) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let x = match self.prev {
            None => self.stationary_sd * z,
            Some(p) => self.tau * p + self.sd * z,
        };
        self.prev = Some(x);
        x
    }
}

/// Length-`T` AR(1) realization started from its stationary law.
pub fn ar1_stream(profile: &NodeSignalProfile, length: usize, seed: u64) -> Result<Vec<f64>> {
    if length == 0 {
        return Err(invalid("stream length must be at least 1"));
    }
    profile.validate()?;
    let mut ar = Ar1::new(profile.tau, profile.sigma_eps_sq, SeedPath::new(seed).rng());
    Ok((0..length).map(|_| ar.next_value()).collect())
}

/// Sliding window `[u(i), u(i−1), …, u(i−L+1)]`.
///
/// [`new`](Self::new) zero-pads the window until `L` samples exist;
/// [`warmed`](Self::warmed) starts from stationary history.
#[derive(Debug, Clone)]
pub struct RegressorStream {
    source: Ar1,
    window: Vec<f64>,
}

impl RegressorStream {
    pub fn new(tau: f64, sigma_eps_sq: f64, length: usize, rng: ChaCha8Rng) -> Self {
        RegressorStream {
            source: Ar1::new(tau, sigma_eps_sq, rng),
            window: vec![0.0; length],
        }
    }

    /// Start with a full window, as if the process had been running forever.
    pub fn warmed(tau: f64, sigma_eps_sq: f64, length: usize, rng: ChaCha8Rng) -> Self {
        let mut s = RegressorStream::new(tau, sigma_eps_sq, length, rng);
        for _ in 1..length {
            s.advance();
        }
        s
    }

    pub fn advance(&mut self) -> &[f64] {
        let x = self.source.next_value();
        self.window.rotate_right(1);
        self.window[0] = x;
        &self.window
    }

    pub fn current(&self) -> &[f64] {
        &self.window
    }
}

/// Chambers–Mallows–Stuck draw with characteristic function `exp(−|t|^α)`.
fn standard_symmetric_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let mut v = PI * (rng.random::<f64>() - 0.5);
    // keep V strictly inside (−π/2, π/2)
    while v.abs() >= FRAC_PI_2 {
        v = PI * (rng.random::<f64>() - 0.5);
    }
    if alpha == 1.0 {
        return v.tan();
    }
    let w: f64 = Exp1.sample(rng);
    (alpha * v).sin() / v.cos().powf(1.0 / alpha) * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

/// Stateful noise generator for one node.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    model: NoiseModel,
    theta_sd: f64,
    rng: ChaCha8Rng,
}

impl NoiseSampler {
    pub fn new(model: NoiseModel, rng: ChaCha8Rng) -> Self {
        let theta_sd = model.sigma_theta_sq().sqrt();
        NoiseSampler { model, theta_sd, rng }
    }

    /// Next noise value and whether an impulse fired.
    pub fn next_sample(&mut self) -> (f64, bool) {
        let background = if self.theta_sd > 0.0 {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            self.theta_sd * z
        } else {
            0.0
        };
        match self.model {
            NoiseModel::Gaussian { .. } => (background, false),
            NoiseModel::ContaminatedGaussian {
                p, sigma_g_sq, shape, ..
            } => {
                let fire = self.rng.random::<f64>() < p;
                if !fire {
                    return (background, false);
                }
                let g = match shape {
                    ImpulseShape::Gaussian => {
                        let z: f64 = StandardNormal.sample(&mut self.rng);
                        sigma_g_sq.sqrt() * z
                    }
                    ImpulseShape::Laplacian => {
                        let e: f64 = Exp1.sample(&mut self.rng);
                        let scale = (sigma_g_sq / 2.0).sqrt();
                        if self.rng.random::<bool>() {
                            scale * e
                        } else {
                            -scale * e
                        }
                    }
                };
                (background + g, true)
            }
            NoiseModel::AlphaStable { alpha, gamma, .. } => {
                let x = gamma.powf(1.0 / alpha) * standard_symmetric_stable(alpha, &mut self.rng);
                (background + x, false)
            }
        }
    }
}

/// Contaminated-Gaussian noise sequence and its impulse flags.
pub fn sample_cg_noise(
    p: f64,
    sigma_theta_sq: f64,
    sigma_g_sq: f64,
    shape: ImpulseShape,
    length: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let model = NoiseModel::ContaminatedGaussian {
        p,
        sigma_theta_sq,
        sigma_g_sq,
        shape,
    };
    model.validate()?;
    let mut sampler = NoiseSampler::new(model, SeedPath::new(seed).rng());
    Ok((0..length).map(|_| sampler.next_sample()).unzip())
}

/// Symmetric α-stable sequence with characteristic function `exp(−γ|t|^α)`.
pub fn sample_alpha_stable(alpha: f64, gamma: f64, length: usize, seed: u64) -> Result<Vec<f64>> {
    let model = NoiseModel::AlphaStable {
        alpha,
        gamma,
        sigma_theta_sq: 0.0,
    };
    model.validate()?;
    let mut sampler = NoiseSampler::new(model, SeedPath::new(seed).rng());
    Ok((0..length).map(|_| sampler.next_sample().0).collect())
}

/// One observation at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub d: f64,
    pub v: f64,
    pub impulse: bool,
}

/// Regressor and noise streams of one node within one trial.
#[derive(Debug, Clone)]
pub struct NodeSource {
    regressor: RegressorStream,
    noise: NoiseSampler,
}

impl NodeSource {
    /// Streams seeded from `node_path.child(stream::REGRESSOR)` and
    /// `node_path.child(stream::NOISE)`. The regressor window is full from
    /// the first step; a zero-padded start makes `1/‖u‖²` heavy-tailed and
    /// throws normalized updates far off during the first `L` iterations.
    pub fn new(profile: &NodeSignalProfile, length: usize, node_path: SeedPath) -> Self {
        NodeSource {
            regressor: RegressorStream::warmed(
                profile.tau,
                profile.sigma_eps_sq,
                length,
                node_path.child(stream::REGRESSOR).rng(),
            ),
            noise: NoiseSampler::new(profile.noise.clone(), node_path.child(stream::NOISE).rng()),
        }
    }

    /// Advance one time step; the new regressor is available via [`regressor`](Self::regressor).
    pub fn advance(&mut self, w_o: &[f64]) -> Observation {
        let u = self.regressor.advance();
        let (v, impulse) = self.noise.next_sample();
        Observation {
            d: dot(u, w_o) + v,
            v,
            impulse,
        }
    }

    pub fn regressor(&self) -> &[f64] {
        self.regressor.current()
    }
}

/// Inclusive range for uniform sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Range { min, max }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.min + (self.max - self.min) * rng.random::<f64>()
    }
}

/// Ranges used to draw heterogeneous per-node statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRanges {
    pub sigma_eps_sq: Range,
    pub tau: Range,
    pub sigma_theta_sq: Range,
}

impl Default for ProfileRanges {
    fn default() -> Self {
        ProfileRanges {
            sigma_eps_sq: Range::new(0.5, 1.5),
            tau: Range::new(0.2, 0.8),
            sigma_theta_sq: Range::new(0.01, 0.1),
        }
    }
}

/// Per-node `(τ, σ²_ε, σ²_θ)` drawn uniformly from `ranges`; `white` forces τ = 0.
pub fn sample_profile_statistics(nodes: usize, ranges: &ProfileRanges, white: bool, seed: u64) -> Vec<(f64, f64, f64)> {
    let mut rng = SeedPath::new(seed).rng();
    (0..nodes)
        .map(|_| {
            let sigma_eps_sq = ranges.sigma_eps_sq.draw(&mut rng);
            let tau = ranges.tau.draw(&mut rng);
            let sigma_theta_sq = ranges.sigma_theta_sq.draw(&mut rng);
            (if white { 0.0 } else { tau }, sigma_eps_sq, sigma_theta_sq)
        })
        .collect()
}

/// Dump `length` samples of one node as CSV `(i, d, v, impulse, u0, u1, …)`.
pub fn write_stream_csv<W: Write>(
    profile: &NodeSignalProfile,
    w_o: &GroundTruth,
    length: usize,
    node_path: SeedPath,
    mut out: W,
) -> Result<()> {
    let mut source = NodeSource::new(profile, w_o.len(), node_path);
    let header: Vec<String> = (0..w_o.len()).map(|l| format!("u{l}")).collect();
    writeln!(out, "i,d,v,impulse,{}", header.join(","))?;
    for i in 0..length {
        let obs = source.advance(w_o.as_slice());
        let u: Vec<String> = source.regressor().iter().map(|x| x.to_string()).collect();
        writeln!(out, "{i},{},{},{},{}", obs.d, obs.v, u8::from(obs.impulse), u.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        (m, x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0))
    }

    fn white(sigma_eps_sq: f64, tau: f64) -> NodeSignalProfile {
        NodeSignalProfile {
            tau,
            sigma_eps_sq,
            noise: NoiseModel::Gaussian { sigma_theta_sq: 0.01 },
        }
    }

    #[test]
    fn ground_truth_shapes() {
        let dense = generate_ground_truth(5, 5, 1).unwrap();
        assert_eq!(dense.sparsity(), 5);
        let one = generate_ground_truth(5, 1, 9).unwrap();
        assert_eq!(one.sparsity(), 1);
        assert!(one.as_slice().iter().any(|&x| x.abs() == 1.0));
        let sparse = generate_ground_truth(32, 2, 3).unwrap();
        assert_eq!(sparse.sparsity(), 2);
        assert!((norm(sparse.as_slice()) - 1.0).abs() < 1e-12);
        assert!(generate_ground_truth(5, 6, 0).is_err());
        assert!(generate_ground_truth(5, 0, 0).is_err());
    }

    #[test]
    fn synthesize_examples() {
        let w = [0.6, 0.8, 0.0];
        assert!((synthesize_output(&w, &w, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(synthesize_output(&[0.0; 3], &w, 0.25).unwrap(), 0.25);
        assert!((synthesize_output(&[1.0, 0.0, 0.0], &w, 0.1).unwrap() - 0.7).abs() < 1e-15);
        assert!(synthesize_output(&[1.0], &w, 0.0).is_err());
    }

    #[test]
    fn ar1_white_variance() {
        let x = ar1_stream(&white(1.3, 0.0), 100_000, 5).unwrap();
        let (_, var) = mean_var(&x);
        // standard error of the sample variance is σ²·sqrt(2/n)
        assert!((var - 1.3).abs() < 3.0 * 1.3 * (2.0f64 / 1e5).sqrt());
    }

    #[test]
    fn ar1_stationary_variance_and_autocorrelation() {
        let x = ar1_stream(&white(0.75, 0.5), 100_000, 11).unwrap();
        let (m, var) = mean_var(&x);
        assert!((var - 1.0).abs() < 0.05);
        let lag: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / (x.len() as f64 - 1.0);
        assert!((lag / var - 0.5).abs() < 0.02);
    }

    #[test]
    fn regressor_window_is_newest_first_and_padded() {
        let mut a = RegressorStream::new(0.5, 1.0, 3, SeedPath::new(1).rng());
        let mut b = Ar1::new(0.5, 1.0, SeedPath::new(1).rng());
        let first = a.advance().to_vec();
        let x0 = b.next_value();
        assert_eq!(first, vec![x0, 0.0, 0.0]);
        let second = a.advance().to_vec();
        let x1 = b.next_value();
        assert_eq!(second, vec![x1, x0, 0.0]);
    }

    #[test]
    fn warmed_window_holds_history() {
        let mut a = RegressorStream::warmed(0.5, 1.0, 3, SeedPath::new(1).rng());
        let mut b = Ar1::new(0.5, 1.0, SeedPath::new(1).rng());
        let x: Vec<f64> = (0..3).map(|_| b.next_value()).collect();
        assert_eq!(a.current()[..2], [x[1], x[0]]);
        assert_eq!(a.advance().to_vec(), vec![x[2], x[1], x[0]]);
    }

    #[test]
    fn cg_noise_variances() {
        let (v, flags) = sample_cg_noise(0.0, 0.05, 500.0, ImpulseShape::Gaussian, 100_000, 1).unwrap();
        assert!(flags.iter().all(|f| !f));
        assert!((mean_var(&v).1 / 0.05 - 1.0).abs() < 0.05);

        let (v, flags) = sample_cg_noise(1.0, 0.05, 5.0, ImpulseShape::Laplacian, 100_000, 2).unwrap();
        assert!(flags.iter().all(|&f| f));
        assert!((mean_var(&v).1 / 5.05 - 1.0).abs() < 0.05);
    }

    #[test]
    fn alpha_two_is_gaussian_with_variance_two_gamma() {
        let x = sample_alpha_stable(2.0, 0.3, 100_000, 4).unwrap();
        assert!((mean_var(&x).1 / 0.6 - 1.0).abs() < 0.05);
    }

    #[test]
    fn cauchy_quartiles() {
        let mut x = sample_alpha_stable(1.0, 0.5, 100_000, 8).unwrap();
        x.sort_by(f64::total_cmp);
        let q = |f: f64| x[(f * x.len() as f64) as usize];
        assert!(q(0.5).abs() < 0.02);
        let iqr = q(0.75) - q(0.25);
        assert!((iqr / 1.0 - 1.0).abs() < 0.1);
    }

    #[test]
    fn determinism() {
        let a = sample_cg_noise(0.1, 1.0, 100.0, ImpulseShape::Gaussian, 100, 3).unwrap();
        let b = sample_cg_noise(0.1, 1.0, 100.0, ImpulseShape::Gaussian, 100, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn profile_ranges_respected() {
        let stats = sample_profile_statistics(20, &ProfileRanges::default(), false, 1);
        for (tau, se, st) in stats {
            assert!((0.2..=0.8).contains(&tau));
            assert!((0.5..=1.5).contains(&se));
            assert!((0.01..=0.1).contains(&st));
        }
    }
}
