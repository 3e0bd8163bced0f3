//! Analytical mean and mean-square models of the diffusion M-estimate family.
//!
//! The network error `w̃_i = 1 ⊗ w° − w_i` is tracked through its mean and its
//! second moment `W_i = E{w̃_i w̃_iᵀ}`. The score function is replaced by the
//! probability `P_k(i)` that node `k` accepts a sample, which turns one step
//! into `w̃_{i+1} = 𝒞ᵀ(I − MPA_i) w̃_i − 𝒞ᵀMP b_i + β 𝒞ᵀM f(w_i)`.
//!
//! The second-moment recursion is evaluated in matrix form, so one step costs
//! `O((NL)³)` rather than the `O((NL)⁴)` of the vectorized operator. The
//! vectorized operator is still available for small networks through
//! [`TheoryModel::vectorized_transition`].

pub mod attractor;
pub mod moments;
pub mod probability;

use nalgebra::{DMatrix, DVector, SymmetricEigen, LU};
use serde::{Deserialize, Serialize};

use crate::diffusion::{to_db, AlgorithmConfig};
use crate::error::{invalid, Error, Result};
use crate::network::CombinationMatrix;
use crate::robust::{AttractorConfig, ExpForm, ScoreFunction};
use crate::signals::{GroundTruth, NodeSignalProfile, NoiseModel};

pub use attractor::{attractor_moments, cross_moment_matrices, CrossMoments, MomentTriple};
pub use moments::{ar1_covariance, estimate_moments, NodeMoments, RegressorMoments, DEFAULT_MOMENT_SAMPLES};
pub use probability::{steady_update_probability, update_probability};

/// Largest `N·L` the model accepts.
pub const MAX_THEORY_DIM: usize = 128;

/// Largest `N·L` for which the steady state is found by a direct solve.
pub const DIRECT_SOLVE_DIM: usize = 64;

/// Relative tolerance of fixed-point iterations.
pub const FIXED_POINT_TOL: f64 = 1e-12;

/// Iteration cap of fixed-point iterations.
pub const FIXED_POINT_CAP: usize = 100_000;

/// How the acceptance probabilities are refreshed during the transient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilityMode {
    /// From the current error variance `Tr(W_k R_k)` at each step.
    #[default]
    Dynamic,
    /// Fixed at the steady-state value.
    Steady,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct NodeNoise {
    p: f64,
    sigma_theta_sq: f64,
    sigma_s_sq: f64,
    total: f64,
}

impl NodeNoise {
    fn from_profile(profile: &NodeSignalProfile) -> Result<Self> {
        profile.validate()?;
        Ok(match profile.noise {
            NoiseModel::Gaussian { sigma_theta_sq } => NodeNoise {
                p: 0.0,
                sigma_theta_sq,
                sigma_s_sq: sigma_theta_sq,
                total: sigma_theta_sq,
            },
            NoiseModel::ContaminatedGaussian { .. } => NodeNoise {
                p: profile.noise.impulse_probability(),
                sigma_theta_sq: profile.noise.sigma_theta_sq(),
                sigma_s_sq: profile.noise.sigma_s_sq(),
                total: profile.noise.variance().unwrap_or(f64::INFINITY),
            },
            NoiseModel::AlphaStable { .. } => {
                return Err(Error::Capability("no analytical model under alpha-stable noise".into()))
            }
        })
    }

    fn steady_probability(&self, robust: bool, kappa: f64) -> f64 {
        if !robust {
            return 1.0;
        }
        steady_update_probability(self.p, self.sigma_theta_sq.sqrt(), self.sigma_s_sq.sqrt(), kappa).unwrap_or(1.0)
    }
}

fn node_noise(profiles: &[NodeSignalProfile], robust: bool) -> Result<Vec<NodeNoise>> {
    let noise = profiles
        .iter()
        .map(NodeNoise::from_profile)
        .collect::<Result<Vec<_>>>()?;
    if robust && noise.iter().any(|z| !(z.sigma_theta_sq > 0.0)) {
        return Err(invalid("the acceptance model needs positive background noise"));
    }
    Ok(noise)
}

fn robust_score(score: &ScoreFunction) -> Result<bool> {
    match score {
        ScoreFunction::ModifiedHuber => Ok(true),
        ScoreFunction::Identity => Ok(false),
        other => Err(Error::Capability(format!("no analytical model for score {other:?}"))),
    }
}

/// Step-size bounds of one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeBounds {
    pub probability: f64,
    /// Convergence in the mean.
    pub mean: f64,
    /// Convergence in the mean-square sense.
    pub mean_square: f64,
    /// Both at once.
    pub combined: f64,
}

impl NodeBounds {
    /// Bounds from the acceptance probability `p` and `E{A_k}` (normalized)
    /// or `R_k` (non-normalized).
    fn new(p: f64, ea: &DMatrix<f64>, normalized: bool) -> Self {
        let lambda = SymmetricEigen::new(ea.clone()).eigenvalues.max();
        let mean = 2.0 / (p * lambda);
        let mean_square = if normalized { 2.0 / p } else { mean };
        NodeBounds {
            probability: p,
            mean,
            mean_square,
            combined: mean.min(mean_square),
        }
    }
}

/// Step-size bounds of a non-normalized algorithm, from the exact input
/// covariance. Needs no moment estimates and has no size limit.
pub fn raw_covariance_bounds(
    profiles: &[NodeSignalProfile],
    algorithm: &AlgorithmConfig,
    length: usize,
) -> Result<Vec<NodeBounds>> {
    if algorithm.normalized {
        return Err(invalid("covariance-only bounds apply to non-normalized algorithms"));
    }
    let robust = robust_score(&algorithm.score)?;
    let noise = node_noise(profiles, robust)?;
    Ok(profiles
        .iter()
        .zip(&noise)
        .map(|(profile, z)| {
            NodeBounds::new(
                z.steady_probability(robust, algorithm.kappa),
                &ar1_covariance(profile, length),
                false,
            )
        })
        .collect())
}

/// Outcome of the sparsity-benefit analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BetaStar {
    /// The sparse variant wins for `0 < β < bound`.
    Bound { bound: f64, beta_a: f64, beta_b: f64 },
    /// No positive β improves on the non-sparse algorithm.
    NoBeneficialRegion { beta_a: f64, beta_b: f64 },
}

impl BetaStar {
    pub fn bound(&self) -> Option<f64> {
        match self {
            BetaStar::Bound { bound, .. } => Some(*bound),
            BetaStar::NoBeneficialRegion { .. } => None,
        }
    }
}

/// Per-node and network MSD, linear scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub mean_error: DVector<f64>,
    pub w: DMatrix<f64>,
    pub node_msd: Vec<f64>,
    pub network_msd: f64,
}

/// Model MSD after each transient step, linear scale.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryCurve {
    pub nodes: usize,
    /// `node_msd[i * nodes + k]` after `i + 1` steps.
    pub node_msd: Vec<f64>,
    pub network_msd: Vec<f64>,
}

impl TheoryCurve {
    pub fn network_msd_db(&self) -> Vec<f64> {
        self.network_msd.iter().map(|&x| to_db(x)).collect()
    }

    pub fn len(&self) -> usize {
        self.network_msd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.network_msd.is_empty()
    }
}

/// Theory summary for reporting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryReport {
    pub step_sizes: Vec<f64>,
    pub steady_probability: Vec<f64>,
    pub bounds: Vec<NodeBounds>,
    pub spectral_radius: f64,
    pub steady_node_msd_db: Option<Vec<f64>>,
    pub steady_network_msd_db: Option<f64>,
    pub steady_error: Option<String>,
    pub beta_star: Option<BetaStar>,
    pub beta_star_error: Option<String>,
}

/// Mean and mean-square model of one configured algorithm on one network.
#[derive(Debug, Clone)]
pub struct TheoryModel {
    n: usize,
    l: usize,
    w_o: Vec<f64>,
    mu: Vec<f64>,
    big_c: DMatrix<f64>,
    ea: Vec<DMatrix<f64>>,
    kron: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    r: Vec<DMatrix<f64>>,
    noise: Vec<NodeNoise>,
    robust: bool,
    kappa: f64,
    beta: f64,
    upsilon: Option<f64>,
    normalized: bool,
    mode: ProbabilityMode,
    mean: DVector<f64>,
    w: DMatrix<f64>,
    iteration: usize,
}

impl TheoryModel {
    /// Set up the model at `w_{k,0} = 0`.
    ///
    /// Supported: modified Huber (acceptance-probability model) or identity
    /// score, normalized or not, with no attractor or the Taylor-form
    /// exponential ℓ0 attractor. Noise must be Gaussian or contaminated
    /// Gaussian.
    pub fn new(
        combination: &CombinationMatrix,
        ground_truth: &GroundTruth,
        profiles: &[NodeSignalProfile],
        algorithm: &AlgorithmConfig,
        moments: &RegressorMoments,
    ) -> Result<Self> {
        algorithm.validate()?;
        let n = combination.node_count();
        let l = ground_truth.len();
        if n * l > MAX_THEORY_DIM {
            return Err(Error::Capability(format!(
                "N·L = {} exceeds the theory limit of {MAX_THEORY_DIM}; run simulation only",
                n * l
            )));
        }
        if profiles.len() != n || moments.node_count() != n || moments.length() != l {
            return Err(invalid("profiles, moments and network sizes disagree"));
        }
        let robust = robust_score(&algorithm.score)?;
        let upsilon = match (&algorithm.attractor, algorithm.proximal) {
            (_, true) => return Err(Error::Capability("no analytical model for proximal variants".into())),
            (None, _) => None,
            (
                Some(AttractorConfig::ExpL0 {
                    upsilon,
                    form: ExpForm::Taylor,
                }),
                _,
            ) => Some(*upsilon),
            (Some(other), _) if algorithm.beta > 0.0 => {
                return Err(Error::Capability(format!(
                    "no analytical model for attractor {other:?}"
                )))
            }
            (Some(_), _) => None,
        };
        let noise = node_noise(profiles, robust)?;
        let mu = algorithm.step_size.resolve(n)?;
        let c = if algorithm.cooperative {
            combination.to_nalgebra()
        } else {
            DMatrix::identity(n, n)
        };
        let big_c = c.kronecker(&DMatrix::<f64>::identity(l, l));
        let mut ea = Vec::with_capacity(n);
        let mut kron = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        let mut r = Vec::with_capacity(n);
        for (k, m) in moments.nodes.iter().enumerate() {
            let sigma_sq = if robust {
                noise[k].sigma_theta_sq
            } else {
                noise[k].total
            };
            if algorithm.normalized {
                ea.push(m.ea.clone());
                kron.push(m.ea_kron.clone());
                b.push(&m.eb * sigma_sq);
            } else {
                ea.push(m.r.clone());
                kron.push(m.r.kronecker(&m.r));
                b.push(&m.r * sigma_sq);
            }
            r.push(m.r.clone());
        }
        let truth = DVector::from_fn(n * l, |j, _| ground_truth.as_slice()[j % l]);
        let w = &truth * truth.transpose();
        Ok(TheoryModel {
            n,
            l,
            w_o: ground_truth.as_slice().to_vec(),
            mu,
            big_c,
            ea,
            kron,
            b,
            r,
            noise,
            robust,
            kappa: algorithm.kappa,
            beta: if upsilon.is_some() { algorithm.beta } else { 0.0 },
            upsilon,
            normalized: algorithm.normalized,
            mode: ProbabilityMode::Dynamic,
            mean: truth,
            w,
            iteration: 0,
        })
    }

    pub fn with_mode(mut self, mode: ProbabilityMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn set_mode(&mut self, mode: ProbabilityMode) {
        self.mode = mode;
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> usize {
        self.l
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn mean_error(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// `Tr(W_k)` per node.
    pub fn node_msd(&self) -> Vec<f64> {
        node_traces(&self.w, self.n, self.l)
    }

    pub fn network_msd(&self) -> f64 {
        self.w.trace() / self.n as f64
    }

    /// `Tr(W_k R_k)` per node.
    pub fn node_emse(&self) -> Vec<f64> {
        (0..self.n)
            .map(|k| (self.block(&self.w, k, k) * &self.r[k]).trace())
            .collect()
    }

    fn block(&self, m: &DMatrix<f64>, k: usize, j: usize) -> DMatrix<f64> {
        m.view((k * self.l, j * self.l), (self.l, self.l)).into_owned()
    }

    /// Acceptance probabilities at steady state (all ones without the
    /// modified Huber score).
    pub fn steady_probabilities(&self) -> Vec<f64> {
        self.noise
            .iter()
            .map(|z| z.steady_probability(self.robust, self.kappa))
            .collect()
    }

    /// Acceptance probabilities for the current covariance.
    pub fn probabilities(&self) -> Vec<f64> {
        if !self.robust {
            return vec![1.0; self.n];
        }
        if self.mode == ProbabilityMode::Steady {
            return self.steady_probabilities();
        }
        let emse = self.node_emse();
        self.noise
            .iter()
            .zip(emse)
            .map(|(z, e)| {
                let e = e.max(0.0);
                update_probability(
                    z.p,
                    (e + z.sigma_s_sq).sqrt(),
                    (e + z.sigma_theta_sq).sqrt(),
                    self.kappa,
                )
                .unwrap_or(1.0)
            })
            .collect()
    }

    fn scaled_steps(&self, p: &[f64]) -> Vec<f64> {
        self.mu.iter().zip(p).map(|(m, p)| m * p).collect()
    }

    /// Block-diagonal `MP E{A}`.
    fn drift(&self, s: &[f64]) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n * self.l, self.n * self.l);
        for k in 0..self.n {
            d.view_mut((k * self.l, k * self.l), (self.l, self.l))
                .copy_from(&(&self.ea[k] * s[k]));
        }
        d
    }

    /// `Γ = 𝒞ᵀ(I − MP E{A})`.
    fn gamma(&self, s: &[f64]) -> DMatrix<f64> {
        let nl = self.n * self.l;
        self.big_c.transpose() * (DMatrix::identity(nl, nl) - self.drift(s))
    }

    /// `E{(I − MPA) W (I − MPA)ᵀ}` mapped through the combination step.
    fn second_order(&self, w: &DMatrix<f64>, s: &[f64], d: &DMatrix<f64>) -> DMatrix<f64> {
        let l = self.l;
        let mut t = w - d * w - w * d.transpose();
        for k in 0..self.n {
            for m in 0..self.n {
                let wkm = self.block(w, k, m);
                let g = if k == m {
                    fourth_apply(&self.kron[k], &wkm)
                } else {
                    &self.ea[k] * wkm * &self.ea[m]
                };
                let mut view = t.view_mut((k * l, m * l), (l, l));
                view += g * (s[k] * s[m]);
            }
        }
        self.big_c.transpose() * t * &self.big_c
    }

    /// `𝒞ᵀ MP B PM 𝒞`.
    fn noise_term(&self, s: &[f64]) -> DMatrix<f64> {
        let nl = self.n * self.l;
        let mut q = DMatrix::zeros(nl, nl);
        for k in 0..self.n {
            q.view_mut((k * self.l, k * self.l), (self.l, self.l))
                .copy_from(&(&self.b[k] * (s[k] * s[k])));
        }
        self.big_c.transpose() * q * &self.big_c
    }

    /// `M𝒞`.
    fn step_combination(&self) -> DMatrix<f64> {
        let mut mc = self.big_c.clone();
        for (row, mut r) in mc.row_iter_mut().enumerate() {
            r *= self.mu[row / self.l];
        }
        mc
    }

    /// Driving terms of the attractor: `(Γ X M𝒞 + (Γ X M𝒞)ᵀ, 𝒞ᵀMΠM𝒞, 𝒞ᵀM E{f})`.
    fn attractor_terms(&self, gamma: &DMatrix<f64>, cm: &CrossMoments) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
        let mc = self.step_combination();
        let linear = gamma * &cm.x * &mc;
        let linear = &linear + linear.transpose();
        let quadratic = mc.transpose() * &cm.pi * &mc;
        let mean = mc.transpose() * &cm.ef;
        (linear, quadratic, mean)
    }

    /// Advance the mean and second moment by one iteration.
    pub fn step(&mut self) -> Result<()> {
        let p = self.probabilities();
        let s = self.scaled_steps(&p);
        let d = self.drift(&s);
        let gamma = self.gamma(&s);
        let mut next = self.second_order(&self.w, &s, &d) + self.noise_term(&s);
        let mut mean = &gamma * &self.mean;
        if let (Some(upsilon), true) = (self.upsilon, self.beta > 0.0) {
            let cm = cross_moment_matrices(&self.w_o, &self.mean, &self.w, upsilon)?;
            let (linear, quadratic, drift) = self.attractor_terms(&gamma, &cm);
            next += linear * self.beta + quadratic * (self.beta * self.beta);
            mean += drift * self.beta;
        }
        self.w = symmetrize(next);
        self.mean = mean;
        self.iteration += 1;
        Ok(())
    }

    /// Run `iterations` steps, recording the MSD after each.
    pub fn run_transient(&mut self, iterations: usize) -> Result<TheoryCurve> {
        let mut node_msd = Vec::with_capacity(iterations * self.n);
        let mut network_msd = Vec::with_capacity(iterations);
        for _ in 0..iterations {
            self.step()?;
            let msd = self.node_msd();
            network_msd.push(msd.iter().sum::<f64>() / self.n as f64);
            node_msd.extend(msd);
        }
        Ok(TheoryCurve {
            nodes: self.n,
            node_msd,
            network_msd,
        })
    }

    /// Step-size bounds per node, using steady-state acceptance probabilities.
    pub fn stability_bounds(&self) -> Vec<NodeBounds> {
        let p = self.steady_probabilities();
        (0..self.n)
            .map(|k| NodeBounds::new(p[k], &self.ea[k], self.normalized))
            .collect()
    }

    /// Spectral radius of the steady-state second-moment operator.
    pub fn spectral_radius(&self) -> f64 {
        let s = self.scaled_steps(&self.steady_probabilities());
        let d = self.drift(&s);
        spectral_radius_positive(|x| self.second_order(x, &s, &d), self.n * self.l)
    }

    fn instability(&self, rho: f64) -> Error {
        let bounds = self.stability_bounds();
        let offenders: Vec<String> = bounds
            .iter()
            .enumerate()
            .filter(|(k, b)| self.mu[*k] >= b.combined)
            .map(|(k, b)| format!("node {k}: mu = {} >= bound {:.6}", self.mu[k], b.combined))
            .collect();
        let which = if self.normalized {
            "combined mean / mean-square bound"
        } else {
            "non-normalized bound 2/(P·λmax(R))"
        };
        if offenders.is_empty() {
            Error::Instability(format!(
                "spectral radius {rho:.9} >= 1 although every step size satisfies the {which}"
            ))
        } else {
            Error::Instability(format!(
                "spectral radius {rho:.9} >= 1; {which} violated at {}",
                offenders.join(", ")
            ))
        }
    }

    fn steady_solver(&self) -> Result<SteadySolver<'_>> {
        let s = self.scaled_steps(&self.steady_probabilities());
        let rho = self.spectral_radius();
        if !(rho < 1.0) {
            return Err(self.instability(rho));
        }
        SteadySolver::new(self, s)
    }

    /// Steady state under steady-state acceptance probabilities.
    ///
    /// Without an active attractor, `(I − F)vec(W) = vec(Q)` is solved
    /// directly; otherwise the transient recursion is iterated to its fixed
    /// point.
    pub fn steady_state(&self) -> Result<SteadyState> {
        let solver = self.steady_solver()?;
        if self.beta > 0.0 && self.upsilon.is_some() {
            let mut model = self.clone().with_mode(ProbabilityMode::Steady);
            for _ in 0..FIXED_POINT_CAP {
                let before = model.w.clone();
                let before_mean = model.mean.clone();
                model.step()?;
                let dw = (&model.w - &before).norm();
                let dm = (&model.mean - &before_mean).norm();
                // the bias may vanish, so measure it against the RMS error
                let scale = model.mean.norm().max(model.w.trace().max(0.0).sqrt());
                if dw <= FIXED_POINT_TOL * model.w.norm() && dm <= FIXED_POINT_TOL * scale {
                    return Ok(self.pack(model.mean, model.w));
                }
                if !model.w.iter().all(|x| x.is_finite()) {
                    return Err(Error::Instability("transient model diverged".into()));
                }
            }
            return Err(Error::Instability(format!(
                "no fixed point within {FIXED_POINT_CAP} iterations"
            )));
        }
        let w = solver.solve(&self.noise_term(&solver.s))?;
        Ok(self.pack(DVector::zeros(self.n * self.l), w))
    }

    /// Steady state by iterating the transient recursion with steady-state
    /// probabilities until the relative change drops below the tolerance.
    pub fn steady_state_by_iteration(&self) -> Result<SteadyState> {
        let mut model = self.clone().with_mode(ProbabilityMode::Steady);
        for _ in 0..FIXED_POINT_CAP {
            let before = model.w.clone();
            model.step()?;
            if (&model.w - &before).norm() <= FIXED_POINT_TOL * model.w.norm() {
                return Ok(self.pack(model.mean, model.w));
            }
        }
        Err(Error::Instability(format!(
            "no fixed point within {FIXED_POINT_CAP} iterations"
        )))
    }

    fn pack(&self, mean_error: DVector<f64>, w: DMatrix<f64>) -> SteadyState {
        let node_msd = node_traces(&w, self.n, self.l);
        let network_msd = node_msd.iter().sum::<f64>() / self.n as f64;
        SteadyState {
            mean_error,
            w,
            node_msd,
            network_msd,
        }
    }

    /// Range of β for which the sparse variant improves on `β = 0`.
    ///
    /// The cross moments are evaluated at the `β = 0` steady state, where the
    /// estimates are unbiased. The MSD change is `(−β β_a + β² β_b)/N`, so the
    /// benefit region is `0 < β < β_a / β_b`.
    pub fn beta_star(&self) -> Result<BetaStar> {
        let upsilon = self
            .upsilon
            .ok_or_else(|| invalid("beta* needs the Taylor-form exponential attractor"))?;
        let mut reference = self.clone();
        reference.beta = 0.0;
        let solver = reference.steady_solver()?;
        let w_ref = solver.solve(&reference.noise_term(&solver.s))?;
        let zero = DVector::zeros(self.n * self.l);
        let cm = cross_moment_matrices(&self.w_o, &zero, &w_ref, upsilon)?;
        let gamma = reference.gamma(&solver.s);
        let (linear, quadratic, _) = reference.attractor_terms(&gamma, &cm);
        let beta_a = -solver.solve(&linear)?.trace();
        let beta_b = solver.solve(&quadratic)?.trace();
        if beta_a > 0.0 && beta_b > 0.0 {
            Ok(BetaStar::Bound {
                bound: beta_a / beta_b,
                beta_a,
                beta_b,
            })
        } else {
            Ok(BetaStar::NoBeneficialRegion { beta_a, beta_b })
        }
    }

    /// Bounds, steady state and β* in one summary. Failures of individual
    /// parts are reported in the corresponding error fields.
    pub fn report(&self) -> TheoryReport {
        let steady = self.steady_state();
        let beta_star = self.upsilon.map(|_| self.beta_star());
        let (steady_node_msd_db, steady_network_msd_db, steady_error) = match steady {
            Ok(s) => (
                Some(s.node_msd.iter().map(|&x| to_db(x)).collect()),
                Some(to_db(s.network_msd)),
                None,
            ),
            Err(e) => (None, None, Some(e.to_string())),
        };
        let (beta_star, beta_star_error) = match beta_star {
            Some(Ok(b)) => (Some(b), None),
            Some(Err(e)) => (None, Some(e.to_string())),
            None => (None, None),
        };
        TheoryReport {
            step_sizes: self.mu.clone(),
            steady_probability: self.steady_probabilities(),
            bounds: self.stability_bounds(),
            spectral_radius: self.spectral_radius(),
            steady_node_msd_db,
            steady_network_msd_db,
            steady_error,
            beta_star,
            beta_star_error,
        }
    }

    /// The `N²L² × N²L²` transition matrix in Kronecker form for given
    /// acceptance probabilities. Only for small networks.
    pub fn vectorized_transition(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        let nl = self.n * self.l;
        if nl > 16 {
            return Err(Error::Capability(format!(
                "vectorized transition limited to NL <= 16, got {nl}"
            )));
        }
        let s = self.scaled_steps(p);
        let mp = DMatrix::from_fn(nl, nl, |a, b| if a == b { s[a / self.l] } else { 0.0 });
        let d = self.drift(&s);
        let id = DMatrix::<f64>::identity(nl, nl);
        let inner = DMatrix::<f64>::identity(nl * nl, nl * nl) - id.kronecker(&d) - d.kronecker(&id)
            + mp.kronecker(&mp) * self.global_fourth_moment();
        let ct = self.big_c.transpose();
        Ok(ct.kronecker(&ct) * inner)
    }

    /// `((𝒞ᵀMP) ⊗ (𝒞ᵀMP)) vec(B)` reshaped into a matrix, the noise term of
    /// the recursion.
    pub fn noise_drive(&self, p: &[f64]) -> DMatrix<f64> {
        self.noise_term(&self.scaled_steps(p))
    }

    /// `E{A ⊗ A}` of the block-diagonal network regressor.
    fn global_fourth_moment(&self) -> DMatrix<f64> {
        let l = self.l;
        let nl = self.n * l;
        let mut out = DMatrix::zeros(nl * nl, nl * nl);
        for a in 0..nl {
            for c in (a / l * l)..(a / l * l + l) {
                for b in 0..nl {
                    for d in (b / l * l)..(b / l * l + l) {
                        let (k, m) = (a / l, b / l);
                        out[(a * nl + b, c * nl + d)] = if k == m {
                            self.kron[k][((a % l) * l + b % l, (c % l) * l + d % l)]
                        } else {
                            self.ea[k][(a % l, c % l)] * self.ea[m][(b % l, d % l)]
                        };
                    }
                }
            }
        }
        out
    }
}

fn fourth_apply(kron: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let l = w.nrows();
    let v = kron * DVector::from_column_slice(w.as_slice());
    DMatrix::from_column_slice(l, l, v.as_slice())
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn node_traces(w: &DMatrix<f64>, n: usize, l: usize) -> Vec<f64> {
    (0..n)
        .map(|k| (0..l).map(|j| w[(k * l + j, k * l + j)]).sum())
        .collect()
}

/// Spectral radius of a linear map that sends positive semidefinite matrices
/// to positive semidefinite matrices.
///
/// Such a map has its spectral radius as a real eigenvalue, so restarted
/// Arnoldi on the space of symmetric matrices, started from the identity,
/// converges to it as the largest-modulus Ritz value.
pub fn spectral_radius_positive<F>(map: F, dim: usize) -> f64
where
    F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    const KRYLOV: usize = 40;
    const RESTARTS: usize = 200;
    const TOL: f64 = 1e-12;
    let len = dim * dim;
    let m = KRYLOV.min(dim * (dim + 1) / 2);
    let mut start = DVector::from_column_slice(DMatrix::<f64>::identity(dim, dim).as_slice());
    let mut previous = f64::NAN;
    let mut theta = 0.0;
    for _ in 0..RESTARTS {
        let norm = start.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return if norm.is_finite() { 0.0 } else { f64::INFINITY };
        }
        let mut basis: Vec<DVector<f64>> = vec![start / norm];
        let mut h = DMatrix::<f64>::zeros(m + 1, m);
        let mut k = m;
        for j in 0..m {
            let x = DMatrix::from_column_slice(dim, dim, basis[j].as_slice());
            let mut w = DVector::from_column_slice(symmetrize(map(&x)).as_slice());
            // modified Gram-Schmidt, twice for stability
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = v.dot(&w);
                    h[(i, j)] += c;
                    w.axpy(-c, v, 1.0);
                }
            }
            let beta = w.norm();
            h[(j + 1, j)] = beta;
            if beta <= 1e-14 * h.column(j).norm().max(f64::MIN_POSITIVE) || !beta.is_finite() {
                k = j + 1;
                break;
            }
            basis.push(w / beta);
        }
        let hk = h.view((0, 0), (k, k)).into_owned();
        let ritz = hk
            .clone()
            .complex_eigenvalues()
            .iter()
            .copied()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()));
        let Some(ritz) = ritz else { return 0.0 };
        theta = ritz.norm();
        if !theta.is_finite() {
            return f64::INFINITY;
        }
        // Ritz vector by inverse iteration on the small Hessenberg matrix
        let shift = ritz.re * (1.0 + 1e-10) + 1e-300;
        let lu = (hk.clone() - DMatrix::identity(k, k) * shift).lu();
        let mut y = DVector::from_element(k, 1.0);
        for _ in 0..3 {
            if let Some(next) = lu.solve(&y) {
                let n = next.norm();
                if n.is_finite() && n > 0.0 {
                    y = next / n;
                }
            }
        }
        let residual = if k < m { 0.0 } else { h[(k, k - 1)] * y[k - 1].abs() };
        if residual <= TOL * theta || (theta - previous).abs() <= TOL * theta {
            return theta;
        }
        previous = theta;
        let mut next = DVector::zeros(len);
        for (v, c) in basis.iter().zip(y.iter()) {
            next.axpy(*c, v, 1.0);
        }
        start = next;
    }
    theta
}

/// Solver of `W = F(W) + Q` for symmetric `Q`.
struct SteadySolver<'a> {
    model: &'a TheoryModel,
    s: Vec<f64>,
    d: DMatrix<f64>,
    lu: Option<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl<'a> SteadySolver<'a> {
    fn new(model: &'a TheoryModel, s: Vec<f64>) -> Result<Self> {
        let nl = model.n * model.l;
        let d = model.drift(&s);
        let lu = if nl <= DIRECT_SOLVE_DIM {
            // restrict the operator to symmetric matrices, coordinates a <= b
            let dim = nl * (nl + 1) / 2;
            let mut system = DMatrix::<f64>::identity(dim, dim);
            let mut col = 0;
            for a in 0..nl {
                for b in a..nl {
                    let mut basis = DMatrix::zeros(nl, nl);
                    basis[(a, b)] = 1.0;
                    basis[(b, a)] = 1.0;
                    let image = model.second_order(&basis, &s, &d);
                    let mut row = 0;
                    for c in 0..nl {
                        for e in c..nl {
                            system[(row, col)] -= image[(c, e)];
                            row += 1;
                        }
                    }
                    col += 1;
                }
            }
            Some(system.lu())
        } else {
            None
        };
        Ok(SteadySolver { model, s, d, lu })
    }

    fn solve(&self, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let nl = self.model.n * self.model.l;
        let q = symmetrize(q.clone());
        match &self.lu {
            Some(lu) => {
                let rhs = DVector::from_iterator(
                    nl * (nl + 1) / 2,
                    (0..nl)
                        .flat_map(|c| (c..nl).map(move |e| (c, e)))
                        .map(|(c, e)| q[(c, e)]),
                );
                let x = lu
                    .solve(&rhs)
                    .ok_or_else(|| Error::Instability("steady-state system is singular".into()))?;
                let mut w = DMatrix::zeros(nl, nl);
                let mut idx = 0;
                for a in 0..nl {
                    for b in a..nl {
                        w[(a, b)] = x[idx];
                        w[(b, a)] = x[idx];
                        idx += 1;
                    }
                }
                Ok(w)
            }
            None => {
                let mut w = q.clone();
                for _ in 0..FIXED_POINT_CAP {
                    let next = symmetrize(self.model.second_order(&w, &self.s, &self.d) + &q);
                    let change = (&next - &w).norm();
                    w = next;
                    if change <= FIXED_POINT_TOL * w.norm().max(f64::MIN_POSITIVE) {
                        return Ok(w);
                    }
                }
                Err(Error::Instability(format!(
                    "no fixed point within {FIXED_POINT_CAP} iterations"
                )))
            }
        }
    }
}
