//! Experiment configuration, loadable from JSON or TOML.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::AlgorithmConfig;
use crate::error::{invalid, Error, Result};
use crate::network::{build_topology, metropolis_weights, CombinationMatrix, Topology, TopologySpec};
use crate::signals::{
    generate_ground_truth, sample_profile_statistics, GroundTruth, ImpulseShape, NodeSignalProfile, NoiseModel,
    ProfileRanges,
};
use crate::theory::DEFAULT_MOMENT_SAMPLES;

/// Full description of one Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub network: TopologySpec,
    pub signals: SignalsConfig,
    pub algorithms: Vec<LabeledAlgorithm>,
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalsConfig {
    /// Filter length `L`.
    pub length: usize,
    /// Number of nonzero taps `Q`; defaults to `L`.
    #[serde(default)]
    pub nonzero: Option<usize>,
    #[serde(default)]
    pub ground_truth_seed: u64,
    /// Explicit `w°`; overrides `nonzero` and `ground_truth_seed`.
    #[serde(default)]
    pub ground_truth: Option<Vec<f64>>,
    pub profiles: ProfileConfig,
}

/// Per-node input and noise statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileConfig {
    Explicit {
        nodes: Vec<NodeSignalProfile>,
    },
    /// Draw `(τ, σ²_ε, σ²_θ)` uniformly per node, then attach `noise`.
    Sampled {
        #[serde(default)]
        ranges: ProfileRanges,
        #[serde(default)]
        white: bool,
        seed: u64,
        noise: NoiseTemplate,
    },
}

/// Noise family applied on top of each node's background variance `σ²_θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseTemplate {
    Gaussian,
    /// Impulses of variance `impulse_ratio · σ²_θ` with probability `p`.
    ContaminatedGaussian {
        p: f64,
        impulse_ratio: f64,
        #[serde(default)]
        shape: ImpulseShape,
    },
    /// Alpha-stable noise replaces the Gaussian background.
    AlphaStable {
        alpha: f64,
        gamma: f64,
    },
}

impl NoiseTemplate {
    fn instantiate(&self, sigma_theta_sq: f64) -> NoiseModel {
        match *self {
            NoiseTemplate::Gaussian => NoiseModel::Gaussian { sigma_theta_sq },
            NoiseTemplate::ContaminatedGaussian {
                p,
                impulse_ratio,
                shape,
            } => NoiseModel::ContaminatedGaussian {
                p,
                sigma_theta_sq,
                sigma_g_sq: impulse_ratio * sigma_theta_sq,
                shape,
            },
            NoiseTemplate::AlphaStable { alpha, gamma } => NoiseModel::AlphaStable {
                alpha,
                gamma,
                sigma_theta_sq: 0.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledAlgorithm {
    pub label: String,
    #[serde(flatten)]
    pub config: AlgorithmConfig,
}

impl LabeledAlgorithm {
    pub fn new(label: impl Into<String>, config: AlgorithmConfig) -> Self {
        LabeledAlgorithm {
            label: label.into(),
            config,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Iterations per trial `T`.
    pub iterations: usize,
    /// Monte Carlo trials `R`.
    pub trials: usize,
    pub seed: u64,
    /// Give every algorithm the same data for a given trial index.
    #[serde(default = "yes")]
    pub paired: bool,
    /// Also evaluate the analytical model.
    #[serde(default)]
    pub theory: bool,
    #[serde(default = "default_moment_samples")]
    pub moment_samples: usize,
    /// Iterations averaged for steady-state figures.
    #[serde(default = "default_steady_window")]
    pub steady_window: usize,
    /// Dump per-coefficient estimation errors after this iteration (1-based).
    #[serde(default)]
    pub diagnostics_at: Option<usize>,
    /// Worker threads for trials; all available cores when absent.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn yes() -> bool {
    true
}

fn default_moment_samples() -> usize {
    DEFAULT_MOMENT_SAMPLES
}

fn default_steady_window() -> usize {
    100
}

impl RunConfig {
    pub fn new(iterations: usize, trials: usize, seed: u64) -> Self {
        RunConfig {
            iterations,
            trials,
            seed,
            paired: true,
            theory: false,
            moment_samples: DEFAULT_MOMENT_SAMPLES,
            steady_window: default_steady_window(),
            diagnostics_at: None,
            workers: None,
            output: None,
        }
    }
}

/// Concrete network, truth and node statistics built from a configuration.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub topology: Topology,
    pub combination: CombinationMatrix,
    pub ground_truth: GroundTruth,
    pub profiles: Vec<NodeSignalProfile>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| invalid(format!("cannot encode as TOML: {e}")))
    }

    /// Read a `.toml` file as TOML and anything else as JSON.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml(&text),
            _ => Self::from_json(&text),
        }
    }

    pub fn algorithm(&self, label: &str) -> Option<&LabeledAlgorithm> {
        self.algorithms.iter().find(|a| a.label == label)
    }

    /// Keep only the named algorithms, in the given order.
    pub fn select(mut self, labels: &[&str]) -> Result<Self> {
        let mut picked = Vec::with_capacity(labels.len());
        for &label in labels {
            let alg = self
                .algorithm(label)
                .cloned()
                .ok_or_else(|| invalid(format!("no algorithm labelled '{label}'")))?;
            picked.push(alg);
        }
        self.algorithms = picked;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let run = &self.run;
        if run.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if run.iterations == 0 {
            return Err(invalid("iterations must be at least 1"));
        }
        if run.steady_window == 0 {
            return Err(invalid("steady_window must be at least 1"));
        }
        if run.workers == Some(0) {
            return Err(invalid("workers must be at least 1"));
        }
        if let Some(at) = run.diagnostics_at {
            if at == 0 || at > run.iterations {
                return Err(invalid(format!("diagnostics_at = {at} outside 1..={}", run.iterations)));
            }
        }
        if self.algorithms.is_empty() {
            return Err(invalid("no algorithms configured"));
        }
        let mut seen = HashSet::new();
        for alg in &self.algorithms {
            let ok = !alg.label.is_empty()
                && alg
                    .label
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
            if !ok || alg.label.starts_with('.') {
                return Err(invalid(format!(
                    "label '{}' must be non-empty ASCII letters, digits, '-', '_' or '.'",
                    alg.label
                )));
            }
            if !seen.insert(alg.label.as_str()) {
                return Err(invalid(format!("duplicate label '{}'", alg.label)));
            }
            alg.config
                .validate()
                .map_err(|e| invalid(format!("algorithm '{}': {e}", alg.label)))?;
        }
        if self.signals.length == 0 {
            return Err(invalid("filter length must be at least 1"));
        }
        Ok(())
    }

    /// Validate and build the concrete network and signal statistics.
    pub fn prepare(&self) -> Result<Prepared> {
        self.validate()?;
        let topology = build_topology(&self.network)?;
        let combination = metropolis_weights(&topology);
        let n = topology.node_count();
        let s = &self.signals;
        let ground_truth = match &s.ground_truth {
            Some(w) => {
                if w.len() != s.length {
                    return Err(invalid(format!(
                        "ground truth has {} taps, length is {}",
                        w.len(),
                        s.length
                    )));
                }
                GroundTruth::new(w.clone())?
            }
            None => generate_ground_truth(s.length, s.nonzero.unwrap_or(s.length), s.ground_truth_seed)?,
        };
        let profiles = match &s.profiles {
            ProfileConfig::Explicit { nodes } => {
                if nodes.len() != n {
                    return Err(invalid(format!("{} signal profiles for {n} nodes", nodes.len())));
                }
                nodes.clone()
            }
            ProfileConfig::Sampled {
                ranges,
                white,
                seed,
                noise,
            } => sample_profile_statistics(n, ranges, *white, *seed)
                .into_iter()
                .map(|(tau, sigma_eps_sq, sigma_theta_sq)| NodeSignalProfile {
                    tau,
                    sigma_eps_sq,
                    noise: noise.instantiate(sigma_theta_sq),
                })
                .collect(),
        };
        for (k, p) in profiles.iter().enumerate() {
            p.validate()
                .map_err(|e| Error::Validation(format!("node {k} profile: {e}")))?;
        }
        Ok(Prepared {
            topology,
            combination,
            ground_truth,
            profiles,
        })
    }

    /// SHA-256 of the canonical JSON encoding, ignoring fields that do not
    /// affect results (output directory, worker count).
    pub fn digest(&self) -> Result<String> {
        let mut canonical = self.clone();
        canonical.run.output = None;
        canonical.run.workers = None;
        let bytes = serde_json::to_vec(&canonical)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}
