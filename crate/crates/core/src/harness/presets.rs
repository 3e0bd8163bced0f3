//! Ready-made experiments reproducing the published figure setups.
//!
//! Node statistics are drawn once from the default ranges with a fixed seed,
//! and the 20-node network is a seeded random geometric graph, so every
//! machine sees the same setup.

use crate::diffusion::AlgorithmConfig;
use crate::error::{invalid, Result};
use crate::network::TopologySpec;
use crate::robust::{AttractorConfig, ExpForm, ScoreFunction};
use crate::signals::{ImpulseShape, ProfileRanges};
use crate::theory::raw_covariance_bounds;

use super::config::{ExperimentConfig, LabeledAlgorithm, NoiseTemplate, ProfileConfig, RunConfig, SignalsConfig};

pub const PRESET_NAMES: &[&str] = &[
    "fig2", "fig3", "fig4", "fig4b", "fig5", "fig6a", "fig6b", "fig7", "fig8", "fig9", "fig9a", "fig9b", "fig10",
    "fig10b", "fig11", "fig14",
];

pub const TOPOLOGY_SEED: u64 = 7;
pub const PROFILE_SEED: u64 = 11;
pub const GROUND_TRUTH_SEED: u64 = 0;
pub const RUN_SEED: u64 = 2024;

const TRIALS: usize = 100;
const UPSILON: f64 = 20.0;

fn taylor_l0(upsilon: f64) -> AttractorConfig {
    AttractorConfig::ExpL0 {
        upsilon,
        form: ExpForm::Taylor,
    }
}

fn dnlms(mu: f64) -> AlgorithmConfig {
    AlgorithmConfig::new(ScoreFunction::Identity, mu)
}

fn l0_dnlms(mu: f64, rho: f64) -> AlgorithmConfig {
    dnlms(mu).with_attractor(taylor_l0(UPSILON), rho)
}

fn non_normalized(score: ScoreFunction, mu: f64) -> AlgorithmConfig {
    AlgorithmConfig::new(score, mu).with_normalized(false)
}

fn dnlmm(mu: f64, window: usize, zeta: f64) -> AlgorithmConfig {
    AlgorithmConfig::new(ScoreFunction::ModifiedHuber, mu).with_threshold(window, zeta)
}

fn dsnlmm(mu: f64, window: usize, zeta: f64, upsilon: f64, beta: f64) -> AlgorithmConfig {
    dnlmm(mu, window, zeta).with_attractor(taylor_l0(upsilon), beta)
}

fn alg(label: &str, config: AlgorithmConfig) -> LabeledAlgorithm {
    LabeledAlgorithm::new(label, config)
}

fn cg(p: f64, impulse_ratio: f64) -> NoiseTemplate {
    NoiseTemplate::ContaminatedGaussian {
        p,
        impulse_ratio,
        shape: ImpulseShape::Gaussian,
    }
}

fn alpha_stable() -> NoiseTemplate {
    NoiseTemplate::AlphaStable {
        alpha: 1.3,
        gamma: 2.0 / 15.0,
    }
}

struct Base {
    nodes: usize,
    length: usize,
    nonzero: usize,
    white: bool,
    noise: NoiseTemplate,
    iterations: usize,
}

impl Base {
    fn large(nonzero: usize, noise: NoiseTemplate, iterations: usize) -> Self {
        Base {
            nodes: 20,
            length: 32,
            nonzero,
            white: false,
            noise,
            iterations,
        }
    }

    fn small(noise: NoiseTemplate, iterations: usize) -> Self {
        Base {
            nodes: 10,
            length: 5,
            nonzero: 5,
            white: false,
            noise,
            iterations,
        }
    }

    fn build(self, algorithms: Vec<LabeledAlgorithm>) -> ExperimentConfig {
        let radius = if self.nodes >= 20 { 0.3 } else { 0.45 };
        ExperimentConfig {
            network: TopologySpec::random_geometric(self.nodes, TOPOLOGY_SEED, radius),
            signals: SignalsConfig {
                length: self.length,
                nonzero: Some(self.nonzero),
                ground_truth_seed: GROUND_TRUTH_SEED,
                ground_truth: None,
                profiles: ProfileConfig::Sampled {
                    ranges: ProfileRanges::default(),
                    white: self.white,
                    seed: PROFILE_SEED,
                    noise: self.noise,
                },
            },
            algorithms,
            run: RunConfig::new(self.iterations, TRIALS, RUN_SEED),
        }
    }
}

/// D-LMM step-size fractions of the non-normalized stability bound swept in
/// the stability preset.
pub const FIG2_FRACTIONS: [f64; 4] = [0.25, 0.5, 0.9, 1.1];

fn d_lmm(mu: f64) -> AlgorithmConfig {
    non_normalized(ScoreFunction::ModifiedHuber, mu).with_threshold(9, 0.99)
}

/// Smallest per-node step-size bound of D-LMM in `cfg`'s setup.
pub fn d_lmm_bound(cfg: &ExperimentConfig) -> Result<f64> {
    let prepared = cfg.prepare()?;
    let bounds = raw_covariance_bounds(&prepared.profiles, &d_lmm(1.0), prepared.ground_truth.len())?;
    Ok(bounds.iter().map(|b| b.combined).fold(f64::INFINITY, f64::min))
}

fn fig2() -> Result<ExperimentConfig> {
    let mut algorithms = Vec::new();
    for mu in [0.5, 1.0, 1.5, 1.9, 2.0] {
        algorithms.push(alg(&format!("D-NLMM_mu{mu}"), dnlmm(mu, 9, 0.99)));
    }
    for mu in [1.0, 2.0] {
        algorithms.push(alg(
            &format!("D-NLMM_noncoop_mu{mu}"),
            dnlmm(mu, 9, 0.99).with_cooperative(false),
        ));
    }
    let mut base = Base::large(32, cg(0.01, 1e4), 3000);
    base.white = true;
    let mut cfg = base.build(algorithms);
    let bound = d_lmm_bound(&cfg)?;
    let lmm = FIG2_FRACTIONS
        .iter()
        .map(|t| alg(&format!("D-LMM_t{t}"), d_lmm(t * bound)));
    cfg.algorithms.splice(0..0, lmm);
    Ok(cfg)
}

fn fig3() -> ExperimentConfig {
    let scores = [
        ("MH", ScoreFunction::ModifiedHuber),
        ("Huber", ScoreFunction::HuberAdaptive),
        ("Hampel", ScoreFunction::hampel()),
    ];
    let algorithms = scores
        .into_iter()
        .map(|(label, score)| alg(label, AlgorithmConfig::new(score, 0.7).with_threshold(9, 0.99)))
        .collect();
    Base::large(2, cg(0.01, 1e4), 3000).build(algorithms)
}

/// Regularization strengths swept in the β presets.
pub const BETA_GRID: [f64; 9] = [1e-6, 3e-6, 1e-5, 2e-5, 5e-5, 1e-4, 2e-4, 5e-4, 1e-3];

fn beta_sweep(upsilons: &[f64], algorithms: &mut Vec<LabeledAlgorithm>, tag: &str) {
    for &upsilon in upsilons {
        for beta in BETA_GRID {
            algorithms.push(alg(
                &format!("D-SNLMM_{tag}_beta{beta:e}"),
                dsnlmm(0.7, 9, 0.99, upsilon, beta),
            ));
        }
    }
}

fn fig4() -> ExperimentConfig {
    let mut algorithms = vec![alg("D-NLMM", dnlmm(0.7, 9, 0.99))];
    for upsilon in [10.0, 20.0, 40.0] {
        beta_sweep(&[upsilon], &mut algorithms, &format!("u{upsilon}"));
    }
    Base::large(2, cg(0.01, 1e4), 4000).build(algorithms)
}

/// β sweep for one sparsity level at `υ = 20`; the `fig4b` preset uses `Q = 8`.
pub fn beta_sweep_preset(nonzero: usize) -> ExperimentConfig {
    let mut algorithms = vec![alg("D-NLMM", dnlmm(0.7, 9, 0.99))];
    beta_sweep(&[UPSILON], &mut algorithms, &format!("Q{nonzero}"));
    Base::large(nonzero, cg(0.01, 1e4), 4000).build(algorithms)
}

fn fig5() -> ExperimentConfig {
    Base::large(2, NoiseTemplate::Gaussian, 5000).build(vec![
        alg("DNLMS", dnlms(0.7)),
        alg("DSE-LMS", non_normalized(ScoreFunction::Sign, 0.006)),
        alg("l0-DNLMS", l0_dnlms(0.7, 6e-5)),
        alg("D-NLMM", dnlmm(0.7, 9, 0.99)),
        alg("D-SNLMM", dsnlmm(0.7, 9, 0.99, UPSILON, 8.6e-5)),
    ])
}

fn fig6(p: f64) -> ExperimentConfig {
    let strong = p > 0.02;
    let (lmp_mu, llad_mu, llad_alpha, huber_b, window) = if strong {
        (0.005, 0.018, 1.4, 0.3, 16)
    } else {
        (0.01, 0.042, 0.5, 0.4, 9)
    };
    Base::large(2, cg(p, 1e4), 5000).build(vec![
        alg("DNLMS", dnlms(0.7)),
        alg("l0-DNLMS", l0_dnlms(0.7, 6e-5)),
        alg("DSE-LMS", non_normalized(ScoreFunction::Sign, 0.0058)),
        alg("DLMP", non_normalized(ScoreFunction::Lmp { p: 1.4 }, lmp_mu)),
        alg(
            "D-LLAD",
            non_normalized(ScoreFunction::Llad { alpha: llad_alpha }, llad_mu),
        ),
        alg(
            "DNHuber",
            AlgorithmConfig::new(ScoreFunction::HuberFixed { b: huber_b }, 0.7),
        ),
        alg("D-NLMM", dnlmm(0.7, window, 0.99)),
        alg("D-SNLMM", dsnlmm(0.7, window, 0.99, UPSILON, 8.6e-5)),
    ])
}

fn fig7() -> ExperimentConfig {
    let noise = NoiseTemplate::ContaminatedGaussian {
        p: 0.1,
        impulse_ratio: 1e3,
        shape: ImpulseShape::Laplacian,
    };
    Base::large(2, noise, 5000).build(vec![
        alg("DNLMS", dnlms(1.0)),
        alg("l0-DNLMS", l0_dnlms(1.0, 1e-4)),
        alg("DSE-LMS", non_normalized(ScoreFunction::Sign, 0.008)),
        alg("DLMP", non_normalized(ScoreFunction::Lmp { p: 1.5 }, 0.007)),
        alg("D-LLAD", non_normalized(ScoreFunction::Llad { alpha: 0.8 }, 0.024)),
        alg("D-NLMM", dnlmm(1.0, 16, 0.95)),
        alg("D-SNLMM", dsnlmm(1.0, 16, 0.95, UPSILON, 1e-4)),
    ])
}

fn fig8() -> ExperimentConfig {
    Base::large(2, alpha_stable(), 5000).build(vec![
        alg("DNLMS", dnlms(0.7)),
        alg("l0-DNLMS", l0_dnlms(0.7, 6e-5)),
        alg("DSE-LMS", non_normalized(ScoreFunction::Sign, 0.006)),
        alg("DLMP", non_normalized(ScoreFunction::Lmp { p: 1.25 }, 0.009)),
        alg("D-LLAD", non_normalized(ScoreFunction::Llad { alpha: 0.6 }, 0.03)),
        alg("D-NLMM", dnlmm(0.7, 16, 0.95)),
        alg("D-SNLMM", dsnlmm(0.7, 16, 0.95, UPSILON, 8.6e-5)),
    ])
}

/// M-estimator settings for the small-network theory checks.
const THEORY_WINDOW: usize = 16;
const THEORY_ZETA: f64 = 0.95;

/// Theory check on the 10-node network; `p` is the impulse probability.
fn fig9(p: f64) -> ExperimentConfig {
    let mut cfg = Base::small(cg(p, 1e4), 1000).build(vec![alg("D-NLMM", dnlmm(0.7, THEORY_WINDOW, THEORY_ZETA))]);
    cfg.run.theory = true;
    cfg
}

fn fig10(p: f64) -> ExperimentConfig {
    let algorithms = [0.1, 0.5, 1.0]
        .into_iter()
        .map(|mu| alg(&format!("D-NLMM_mu{mu}"), dnlmm(mu, THEORY_WINDOW, THEORY_ZETA)))
        .collect();
    let mut cfg = Base::small(cg(p, 1e4), 2000).build(algorithms);
    cfg.run.theory = true;
    cfg
}

fn fig11() -> ExperimentConfig {
    let mut cfg = Base::small(cg(0.01, 1e4), 2000).build(vec![alg("D-SNLMM", dsnlmm(0.2, 9, 0.99, UPSILON, 3e-4))]);
    cfg.signals.ground_truth = Some(vec![0.0, 0.0, 0.0, 1.0, 0.0]);
    cfg.signals.nonzero = Some(1);
    cfg.run.theory = true;
    cfg.run.diagnostics_at = Some(100);
    cfg
}

fn fig14() -> ExperimentConfig {
    Base::large(2, alpha_stable(), 5000).build(vec![
        alg("D-SNLMM", dsnlmm(0.7, 16, 0.95, UPSILON, 8.6e-5)),
        alg(
            "prox-l1",
            dnlmm(0.7, 16, 0.95).with_attractor(AttractorConfig::SoftThreshold, 2e-4),
        ),
        alg(
            "prox-l0",
            dnlmm(0.7, 16, 0.95).with_attractor(AttractorConfig::WeightedSoftThreshold { upsilon: UPSILON }, 6e-5),
        ),
    ])
}

/// Configuration of a named preset.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let cfg = match name {
        "fig2" => fig2()?,
        "fig3" => fig3(),
        "fig4" => fig4(),
        "fig4b" => beta_sweep_preset(8),
        "fig5" => fig5(),
        "fig6a" => fig6(0.01),
        "fig6b" => fig6(0.05),
        "fig7" => fig7(),
        "fig8" => fig8(),
        "fig9" | "fig9a" => fig9(0.01),
        "fig9b" => fig9(0.05),
        "fig10" => fig10(0.01),
        "fig10b" => fig10(0.05),
        "fig11" => fig11(),
        "fig14" => fig14(),
        other => {
            return Err(invalid(format!(
                "unknown preset '{other}'; known: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(cfg)
}
