//! Adapt-then-combine diffusion engine.
//!
//! One network iteration first adapts every node on its own data,
//! `ψ_k = w_k + μ_k u_k φ′(e_k) / g_k − μ_k β f(w_k)`, then combines
//! `w_k = Σ_m c_{m,k} ψ_m`. The proximal variants drop the attractor from the
//! adaptation and instead apply a proximal operator after combining.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::network::CombinationMatrix;
use crate::robust::{apply_proximal, AttractorConfig, ScoreFunction, ThresholdState, DEFAULT_KAPPA};
use crate::seed::SeedPath;
use crate::signals::{dot, GroundTruth, NodeSignalProfile, NodeSource};

/// Regularizer added to `‖u‖²` in normalized updates.
pub const DEFAULT_EPSILON_NORM: f64 = 1e-8;

/// Estimates with a norm beyond this are treated as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;

fn yes() -> bool {
    true
}
fn default_epsilon_norm() -> f64 {
    DEFAULT_EPSILON_NORM
}
fn default_window() -> usize {
    9
}
fn default_zeta() -> f64 {
    0.99
}
fn default_kappa() -> f64 {
    DEFAULT_KAPPA
}

/// Step size shared by every node or given per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSize {
    Common(f64),
    PerNode(Vec<f64>),
}

impl StepSize {
    pub fn at(&self, k: usize) -> f64 {
        match self {
            StepSize::Common(mu) => *mu,
            StepSize::PerNode(mus) => mus[k],
        }
    }

    pub fn resolve(&self, nodes: usize) -> Result<Vec<f64>> {
        let mus = match self {
            StepSize::Common(mu) => vec![*mu; nodes],
            StepSize::PerNode(mus) => {
                if mus.len() != nodes {
                    return Err(invalid(format!("{} step sizes given for {nodes} nodes", mus.len())));
                }
                mus.clone()
            }
        };
        if let Some(mu) = mus.iter().find(|mu| !(**mu > 0.0 && mu.is_finite())) {
            return Err(invalid(format!("step size must be positive, got {mu}")));
        }
        Ok(mus)
    }
}

/// Everything that distinguishes one member of the algorithm family from another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmConfig {
    pub score: ScoreFunction,
    #[serde(default = "yes")]
    pub normalized: bool,
    pub step_size: StepSize,
    #[serde(default)]
    pub attractor: Option<AttractorConfig>,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub proximal: bool,
    #[serde(default = "yes")]
    pub cooperative: bool,
    #[serde(default = "default_epsilon_norm")]
    pub epsilon_norm: f64,
    /// Threshold window length `N_w`.
    #[serde(default = "default_window")]
    pub window: usize,
    /// Threshold forgetting factor `ζ`.
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    /// Threshold multiplier `κ`.
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

impl AlgorithmConfig {
    /// Plain configuration with the given score and a common step size.
    pub fn new(score: ScoreFunction, mu: f64) -> Self {
        AlgorithmConfig {
            score,
            normalized: true,
            step_size: StepSize::Common(mu),
            attractor: None,
            beta: 0.0,
            proximal: false,
            cooperative: true,
            epsilon_norm: DEFAULT_EPSILON_NORM,
            window: default_window(),
            zeta: default_zeta(),
            kappa: DEFAULT_KAPPA,
        }
    }

    pub fn with_attractor(mut self, attractor: AttractorConfig, beta: f64) -> Self {
        self.proximal = attractor.is_proximal();
        self.attractor = Some(attractor);
        self.beta = beta;
        self
    }

    pub fn with_normalized(mut self, normalized: bool) -> Self {
        self.normalized = normalized;
        self
    }

    pub fn with_cooperative(mut self, cooperative: bool) -> Self {
        self.cooperative = cooperative;
        self
    }

    pub fn with_threshold(mut self, window: usize, zeta: f64) -> Self {
        self.window = window;
        self.zeta = zeta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.score.validate()?;
        if let StepSize::Common(mu) = self.step_size {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(invalid(format!("step size must be positive, got {mu}")));
            }
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(invalid(format!("beta must be nonnegative, got {}", self.beta)));
        }
        if !(self.epsilon_norm >= 0.0) {
            return Err(invalid("epsilon_norm must be nonnegative"));
        }
        if let Some(a) = &self.attractor {
            a.validate()?;
            if self.proximal != a.is_proximal() {
                return Err(invalid("proximal mode requires a proximal attractor and vice versa"));
            }
        } else if self.proximal {
            return Err(invalid("proximal mode requires a proximal attractor"));
        }
        if self.score.is_adaptive() {
            ThresholdState::new(self.window, self.zeta, self.kappa)?;
        }
        Ok(())
    }

    /// Attractor in effect for the gradient form, if any.
    fn gradient_attractor(&self) -> Option<&AttractorConfig> {
        match &self.attractor {
            Some(a) if self.beta > 0.0 && !self.proximal => Some(a),
            _ => None,
        }
    }
}

/// Mutable state of one node.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub w: Vec<f64>,
    pub psi: Vec<f64>,
    pub mu: f64,
    pub threshold: Option<ThresholdState>,
}

impl NodeState {
    pub fn new(length: usize, mu: f64, cfg: &AlgorithmConfig) -> Result<Self> {
        let threshold = if cfg.score.is_adaptive() {
            Some(ThresholdState::new(cfg.window, cfg.zeta, cfg.kappa)?)
        } else {
            None
        };
        Ok(NodeState {
            w: vec![0.0; length],
            psi: vec![0.0; length],
            mu,
            threshold,
        })
    }
}

/// Outcome of one adaptation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptOutcome {
    pub error: f64,
    pub threshold: f64,
    /// False when the modified Huber score rejected the sample.
    pub accepted: bool,
}

/// Write the intermediate estimate into `state.psi`.
pub fn adapt(state: &mut NodeState, u: &[f64], d: f64, cfg: &AlgorithmConfig) -> Result<AdaptOutcome> {
    if u.len() != state.w.len() {
        return Err(invalid(format!(
            "regressor length {} does not match estimate length {}",
            u.len(),
            state.w.len()
        )));
    }
    let e = d - dot(u, &state.w);
    let xi = match state.threshold.as_mut() {
        Some(t) => t.update(e),
        None => f64::INFINITY,
    };
    let mu = state.mu;
    let accepted = !matches!(cfg.score, ScoreFunction::ModifiedHuber) || e.abs() < xi;
    let gain = if accepted {
        let phi = cfg.score.evaluate(e, xi);
        if cfg.normalized {
            mu * phi / (dot(u, u) + cfg.epsilon_norm)
        } else {
            mu * phi
        }
    } else {
        0.0
    };
    let attractor = cfg.gradient_attractor();
    let shrink = mu * cfg.beta;
    for ((p, &w), &x) in state.psi.iter_mut().zip(&state.w).zip(u) {
        let mut v = if accepted { w + gain * x } else { w };
        if let Some(a) = attractor {
            v -= shrink * a.evaluate(w);
        }
        *p = v;
    }
    Ok(AdaptOutcome {
        error: e,
        threshold: xi,
        accepted,
    })
}

/// `w_k = Σ_m c_{m,k} ψ_m` for every node. `psis` and `out` are node-major
/// with `length` coefficients per node.
pub fn combine(psis: &[f64], c: &CombinationMatrix, length: usize, out: &mut [f64]) {
    let n = c.node_count();
    for k in 0..n {
        let dst = &mut out[k * length..(k + 1) * length];
        dst.fill(0.0);
        for m in 0..n {
            let ck = c.weight(m, k);
            if ck != 0.0 {
                let src = &psis[m * length..(m + 1) * length];
                for (o, &p) in dst.iter_mut().zip(src) {
                    *o += ck * p;
                }
            }
        }
    }
}

/// A network of nodes running one configured algorithm.
#[derive(Debug, Clone)]
pub struct DiffusionNetwork {
    cfg: AlgorithmConfig,
    combination: Option<CombinationMatrix>,
    nodes: Vec<NodeState>,
    length: usize,
    psis: Vec<f64>,
    combined: Vec<f64>,
}

impl DiffusionNetwork {
    /// Nodes start from `w = 0`. With `cfg.cooperative == false` the
    /// combination matrix is ignored.
    pub fn new(cfg: &AlgorithmConfig, combination: &CombinationMatrix, length: usize) -> Result<Self> {
        cfg.validate()?;
        let n = combination.node_count();
        let mus = cfg.step_size.resolve(n)?;
        let nodes = mus
            .iter()
            .map(|&mu| NodeState::new(length, mu, cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(DiffusionNetwork {
            cfg: cfg.clone(),
            combination: cfg.cooperative.then(|| combination.clone()),
            nodes,
            length,
            psis: vec![0.0; n * length],
            combined: vec![0.0; n * length],
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn estimate(&self, k: usize) -> &[f64] {
        &self.nodes[k].w
    }

    /// One full iteration. `regressor(k)` yields node `k`'s regressor.
    pub fn step<'a, F>(&mut self, mut regressor: F, d: &[f64]) -> Result<()>
    where
        F: FnMut(usize) -> &'a [f64],
    {
        let l = self.length;
        for (k, node) in self.nodes.iter_mut().enumerate() {
            adapt(node, regressor(k), d[k], &self.cfg)?;
            self.psis[k * l..(k + 1) * l].copy_from_slice(&node.psi);
        }
        match &self.combination {
            Some(c) => combine(&self.psis, c, l, &mut self.combined),
            None => self.combined.copy_from_slice(&self.psis),
        }
        if self.cfg.proximal {
            if let Some(a) = &self.cfg.attractor {
                for (k, node) in self.nodes.iter().enumerate() {
                    apply_proximal(a, &mut self.combined[k * l..(k + 1) * l], node.mu * self.cfg.beta);
                }
            }
        }
        for (k, node) in self.nodes.iter_mut().enumerate() {
            node.w.copy_from_slice(&self.combined[k * l..(k + 1) * l]);
        }
        Ok(())
    }

    /// True when any estimate is non-finite or exceeds [`DIVERGENCE_NORM`].
    pub fn diverged(&self) -> bool {
        self.nodes.iter().any(|n| {
            let sq: f64 = n.w.iter().map(|x| x * x).sum();
            !sq.is_finite() || sq.sqrt() > DIVERGENCE_NORM
        })
    }
}

/// Optional extra recording during a trial.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialOptions {
    /// Store all estimates right after this iteration (0-based).
    pub snapshot_at: Option<usize>,
    /// Average estimates over the last this many iterations.
    pub tail: usize,
}

/// Per-iteration squared deviations of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub nodes: usize,
    pub length: usize,
    /// Requested iteration count.
    pub iterations: usize,
    /// `squared_deviation[i * nodes + k] = ‖w° − w_{k,i+1}‖²`.
    pub squared_deviation: Vec<f64>,
    /// Iteration at which divergence was detected; recording stops there.
    pub diverged_at: Option<usize>,
    /// Node-major estimates captured at `TrialOptions::snapshot_at`.
    pub snapshot: Option<Vec<f64>>,
    /// Node-major mean estimates over the tail window.
    pub tail_mean: Option<Vec<f64>>,
}

impl Trajectory {
    /// Number of recorded iterations.
    pub fn recorded(&self) -> usize {
        self.squared_deviation.len() / self.nodes.max(1)
    }

    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn at(&self, iteration: usize, node: usize) -> f64 {
        self.squared_deviation[iteration * self.nodes + node]
    }

    /// Rows `iteration,node,squared_deviation`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iteration,node,squared_deviation")?;
        for i in 0..self.recorded() {
            for k in 0..self.nodes {
                writeln!(out, "{i},{k},{}", self.at(i, k))?;
            }
        }
        Ok(())
    }

    /// Summary with the caller-supplied configuration digest.
    pub fn summary_json(&self, config_digest: &str) -> Result<String> {
        let last = self.recorded().checked_sub(1);
        let final_msd_db = last.map(|i| {
            let mean = (0..self.nodes).map(|k| self.at(i, k)).sum::<f64>() / self.nodes as f64;
            to_db(mean)
        });
        let value = serde_json::json!({
            "config_digest": config_digest,
            "diverged": self.diverged(),
            "diverged_at": self.diverged_at,
            "iterations": self.iterations,
            "recorded": self.recorded(),
            "final_msd_db": final_msd_db,
        });
        Ok(serde_json::to_string_pretty(&value)?)
    }
}

/// Lowest reported level in dB.
pub const DB_FLOOR: f64 = -320.0;

pub fn to_db(x: f64) -> f64 {
    if x > 0.0 {
        (10.0 * x.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

/// Run `iterations` ATC cycles from zero initial estimates.
///
/// Node `k` draws its regressor and noise from streams rooted at
/// `trial.child(k)`, so two algorithms given the same `trial` see identical data.
pub fn run_trial(
    combination: &CombinationMatrix,
    ground_truth: &GroundTruth,
    profiles: &[NodeSignalProfile],
    cfg: &AlgorithmConfig,
    iterations: usize,
    trial: SeedPath,
    options: &TrialOptions,
) -> Result<Trajectory> {
    let n = combination.node_count();
    if profiles.len() != n {
        return Err(invalid(format!("{} signal profiles for {n} nodes", profiles.len())));
    }
    if iterations == 0 {
        return Err(invalid("iteration count must be at least 1"));
    }
    for p in profiles {
        p.validate()?;
    }
    let l = ground_truth.len();
    let w_o = ground_truth.as_slice();
    let mut net = DiffusionNetwork::new(cfg, combination, l)?;
    let mut sources: Vec<NodeSource> = profiles
        .iter()
        .enumerate()
        .map(|(k, p)| NodeSource::new(p, l, trial.child(k as u64)))
        .collect();
    let mut d = vec![0.0; n];
    let mut squared_deviation = Vec::with_capacity(iterations * n);
    let mut diverged_at = None;
    let mut snapshot = None;
    let tail = options.tail.min(iterations);
    let mut tail_sum = (tail > 0).then(|| vec![0.0; n * l]);

    for i in 0..iterations {
        for (k, s) in sources.iter_mut().enumerate() {
            d[k] = s.advance(w_o).d;
        }
        net.step(|k| sources[k].regressor(), &d)?;
        if net.diverged() {
            diverged_at = Some(i);
            break;
        }
        for k in 0..n {
            let dev: f64 = net.estimate(k).iter().zip(w_o).map(|(w, o)| (o - w) * (o - w)).sum();
            squared_deviation.push(dev);
        }
        if options.snapshot_at == Some(i) {
            snapshot = Some((0..n).flat_map(|k| net.estimate(k).to_vec()).collect());
        }
        if let Some(sum) = tail_sum.as_mut() {
            if i >= iterations - tail {
                for k in 0..n {
                    for (s, w) in sum[k * l..(k + 1) * l].iter_mut().zip(net.estimate(k)) {
                        *s += w;
                    }
                }
            }
        }
    }
    let tail_mean = match (tail_sum, diverged_at) {
        (Some(sum), None) => Some(sum.into_iter().map(|s| s / tail as f64).collect()),
        _ => None,
    };
    Ok(Trajectory {
        nodes: n,
        length: l,
        iterations,
        squared_deviation,
        diverged_at,
        snapshot,
        tail_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_topology, metropolis_weights, TopologySpec};
    use crate::robust::ExpForm;
    use crate::signals::NoiseModel;

    fn mh(mu: f64) -> AlgorithmConfig {
        AlgorithmConfig::new(ScoreFunction::ModifiedHuber, mu)
    }

    #[test]
    fn freeze_on_rejection() {
        let cfg = mh(0.5);
        let mut s = NodeState::new(2, 0.5, &cfg).unwrap();
        s.w = vec![0.3, -0.1];
        s.threshold.as_mut().unwrap().set_sigma_sq(1e-6);
        let out = adapt(&mut s, &[1.0, 2.0], 50.0, &cfg).unwrap();
        assert!(!out.accepted);
        assert_eq!(s.psi, s.w);
    }

    #[test]
    fn accepted_mh_matches_nlms_step() {
        let cfg = mh(0.7);
        let plain = AlgorithmConfig::new(ScoreFunction::Identity, 0.7);
        let mut a = NodeState::new(3, 0.7, &cfg).unwrap();
        let mut b = NodeState::new(3, 0.7, &plain).unwrap();
        a.w = vec![0.1, 0.2, 0.3];
        b.w = a.w.clone();
        let u = [0.5, -1.0, 0.25];
        // first call sets ξ = κ|e|, so |e| < ξ
        let out = adapt(&mut a, &u, 0.4, &cfg).unwrap();
        assert!(out.accepted);
        adapt(&mut b, &u, 0.4, &plain).unwrap();
        assert_eq!(a.psi, b.psi);
    }

    #[test]
    fn hand_evaluated_step() {
        let mut cfg = AlgorithmConfig::new(ScoreFunction::Identity, 1.0);
        cfg.epsilon_norm = 0.0;
        let mut s = NodeState::new(2, 1.0, &cfg).unwrap();
        adapt(&mut s, &[1.0, 0.0], 1.0, &cfg).unwrap();
        assert_eq!(s.psi, vec![1.0, 0.0]);
    }

    #[test]
    fn attractor_applied_on_rejected_samples() {
        let cfg = mh(0.5).with_attractor(
            AttractorConfig::ExpL0 {
                upsilon: 20.0,
                form: ExpForm::Taylor,
            },
            1e-3,
        );
        let mut s = NodeState::new(1, 0.5, &cfg).unwrap();
        s.w = vec![0.02];
        s.threshold.as_mut().unwrap().set_sigma_sq(1e-8);
        let out = adapt(&mut s, &[1.0], 100.0, &cfg).unwrap();
        assert!(!out.accepted);
        assert!((s.psi[0] - (0.02 - 0.5 * 1e-3 * 12.0)).abs() < 1e-15);
    }

    #[test]
    fn combine_chain_example() {
        let t = build_topology(&TopologySpec::explicit(vec![
            vec![1, 1, 0],
            vec![1, 1, 1],
            vec![0, 1, 1],
        ]))
        .unwrap();
        let c = metropolis_weights(&t);
        let mut out = vec![0.0; 3];
        combine(&[1.0, 0.0, 0.0], &c, 1, &mut out);
        assert!((out[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((out[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(out[2], 0.0);

        let id = CombinationMatrix::identity(3);
        combine(&[0.4, 0.5, 0.6], &id, 1, &mut out);
        assert_eq!(out, vec![0.4, 0.5, 0.6]);
    }

    #[test]
    fn scalar_nlms_converges_in_one_step_without_noise() {
        let gt = GroundTruth::new(vec![-1.0]).unwrap();
        let profile = NodeSignalProfile {
            tau: 0.0,
            sigma_eps_sq: 1.0,
            noise: NoiseModel::Gaussian { sigma_theta_sq: 0.0 },
        };
        let mut cfg = AlgorithmConfig::new(ScoreFunction::Identity, 1.0);
        cfg.epsilon_norm = 0.0;
        let traj = run_trial(
            &CombinationMatrix::identity(1),
            &gt,
            &[profile],
            &cfg,
            5,
            SeedPath::new(1),
            &TrialOptions::default(),
        )
        .unwrap();
        assert!(traj.at(0, 0) < 1e-30);
    }

    #[test]
    fn invalid_proximal_combination_rejected() {
        let mut cfg = mh(0.5);
        cfg.proximal = true;
        assert!(cfg.validate().is_err());
        let cfg = mh(0.5).with_attractor(AttractorConfig::L1, 1e-3);
        assert!(!cfg.proximal);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn db_floor() {
        assert_eq!(to_db(0.0), DB_FLOOR);
        assert_eq!(to_db(1.0), 0.0);
    }
}
