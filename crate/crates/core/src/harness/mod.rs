//! Monte Carlo experiments: seeded trials, averaging, theory overlays and export.

pub mod config;
pub mod export;
pub mod presets;

use rayon::prelude::*;

use crate::diffusion::{run_trial, to_db, Trajectory, TrialOptions};
use crate::error::{invalid, Error, Result};
use crate::seed::SeedPath;
use crate::theory::{estimate_moments, RegressorMoments, TheoryModel, TheoryReport};

pub use config::{
    ExperimentConfig, LabeledAlgorithm, NoiseTemplate, Prepared, ProfileConfig, RunConfig, SignalsConfig,
};
pub use export::write_outputs;
pub use presets::{d_lmm_bound, preset, PRESET_NAMES};

/// Seed branch reserved for regressor-moment estimation.
const MOMENT_BRANCH: u64 = u64::MAX;

/// Seed path of trial `trial` for the algorithm at `index`.
pub fn trial_path(master: u64, paired: bool, index: usize, trial: usize) -> SeedPath {
    let branch = if paired { 0 } else { index as u64 + 1 };
    SeedPath::new(master).child(branch).child(trial as u64)
}

/// Analytical curves and summary for one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryOverlay {
    /// Network MSD in dB after each iteration.
    pub network_msd_db: Vec<f64>,
    /// `node_msd[i * nodes + k]`, linear.
    pub node_msd: Vec<f64>,
    pub report: TheoryReport,
}

/// Aggregated outcome of one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmResult {
    pub label: String,
    /// Trial-averaged network MSD in dB, one entry per iteration.
    pub msd_db: Vec<f64>,
    /// Trial-averaged squared deviation, `node_msd[i * nodes + k]`, linear.
    pub node_msd: Vec<f64>,
    /// Mean of the last `steady_window` network MSD values, in dB.
    pub steady_msd_db: f64,
    pub node_steady_msd_db: Vec<f64>,
    /// Trials that hit the divergence guard.
    pub diverged_trials: usize,
    /// Node-major estimates averaged over the steady window and over the
    /// trials that did not diverge.
    pub mean_estimate: Option<Vec<f64>>,
    /// Per-trial node-major estimates at `diagnostics_at`, diverged trials skipped.
    pub diagnostics: Vec<(usize, Vec<f64>)>,
    pub theory: Option<std::result::Result<TheoryOverlay, String>>,
}

/// Everything `run_experiment` produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultSet {
    pub config_digest: String,
    pub nodes: usize,
    pub length: usize,
    pub iterations: usize,
    pub trials: usize,
    pub ground_truth: Vec<f64>,
    pub algorithms: Vec<AlgorithmResult>,
}

impl ResultSet {
    pub fn get(&self, label: &str) -> Option<&AlgorithmResult> {
        self.algorithms.iter().find(|a| a.label == label)
    }
}

/// Trial- and node-averaged MSD in dB per iteration.
///
/// Trajectories cut short by divergence are held at their last recorded
/// value (or 1, the initial deviation of a unit-norm truth, if nothing was
/// recorded), so a diverged trial dominates the average instead of vanishing.
pub fn compute_msd(trajectories: &[Trajectory]) -> Result<Vec<f64>> {
    let (per_node, nodes) = average_deviation(trajectories)?;
    Ok(network_curve(&per_node, nodes).into_iter().map(to_db).collect())
}

fn average_deviation(trajectories: &[Trajectory]) -> Result<(Vec<f64>, usize)> {
    let first = trajectories
        .first()
        .ok_or_else(|| invalid("no trajectories to average"))?;
    let (nodes, iterations) = (first.nodes, first.iterations);
    if trajectories
        .iter()
        .any(|t| t.nodes != nodes || t.iterations != iterations)
    {
        return Err(invalid("trajectories differ in node or iteration count"));
    }
    let mut sum = vec![0.0; nodes * iterations];
    for t in trajectories {
        let recorded = t.recorded();
        for i in 0..iterations {
            for k in 0..nodes {
                sum[i * nodes + k] += if i < recorded {
                    t.at(i, k)
                } else if recorded > 0 {
                    t.at(recorded - 1, k)
                } else {
                    1.0
                };
            }
        }
    }
    let r = trajectories.len() as f64;
    sum.iter_mut().for_each(|x| *x /= r);
    Ok((sum, nodes))
}

fn network_curve(per_node: &[f64], nodes: usize) -> Vec<f64> {
    per_node
        .chunks(nodes)
        .map(|row| row.iter().sum::<f64>() / nodes as f64)
        .collect()
}

fn tail_mean(values: impl Iterator<Item = f64>, count: usize) -> f64 {
    values.sum::<f64>() / count as f64
}

/// Run every configured algorithm and, if requested, its analytical model.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultSet> {
    let prepared = cfg.prepare()?;
    let pool = match cfg.run.workers {
        Some(w) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?,
        ),
        None => None,
    };
    let moments = if cfg.run.theory {
        Some(experiment_moments(cfg, &prepared))
    } else {
        None
    };
    let mut algorithms = Vec::with_capacity(cfg.algorithms.len());
    for (index, alg) in cfg.algorithms.iter().enumerate() {
        let job = || simulate(cfg, &prepared, index, alg);
        let mut result = match &pool {
            Some(p) => p.install(job)?,
            None => job()?,
        };
        if let Some(m) = &moments {
            result.theory = Some(match m {
                Ok(m) => theory_overlay(cfg, &prepared, alg, m).map_err(|e| e.to_string()),
                Err(e) => Err(e.clone()),
            });
        }
        algorithms.push(result);
    }
    Ok(ResultSet {
        config_digest: cfg.digest()?,
        nodes: prepared.topology.node_count(),
        length: prepared.ground_truth.len(),
        iterations: cfg.run.iterations,
        trials: cfg.run.trials,
        ground_truth: prepared.ground_truth.as_slice().to_vec(),
        algorithms,
    })
}

/// Analytical model only, for every algorithm.
pub fn run_theory(cfg: &ExperimentConfig) -> Result<Vec<(String, std::result::Result<TheoryOverlay, String>)>> {
    let prepared = cfg.prepare()?;
    let moments = experiment_moments(cfg, &prepared).map_err(Error::Validation)?;
    Ok(cfg
        .algorithms
        .iter()
        .map(|alg| {
            (
                alg.label.clone(),
                theory_overlay(cfg, &prepared, alg, &moments).map_err(|e| e.to_string()),
            )
        })
        .collect())
}

fn experiment_moments(cfg: &ExperimentConfig, prepared: &Prepared) -> std::result::Result<RegressorMoments, String> {
    let seed = SeedPath::new(cfg.run.seed).child(MOMENT_BRANCH).value();
    estimate_moments(
        &prepared.profiles,
        prepared.ground_truth.len(),
        cfg.run.moment_samples,
        seed,
    )
    .map_err(|e| e.to_string())
}

fn theory_overlay(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    alg: &LabeledAlgorithm,
    moments: &RegressorMoments,
) -> Result<TheoryOverlay> {
    let mut model = TheoryModel::new(
        &prepared.combination,
        &prepared.ground_truth,
        &prepared.profiles,
        &alg.config,
        moments,
    )?;
    let report = model.report();
    let curve = model.run_transient(cfg.run.iterations)?;
    Ok(TheoryOverlay {
        network_msd_db: curve.network_msd_db(),
        node_msd: curve.node_msd,
        report,
    })
}

fn simulate(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    index: usize,
    alg: &LabeledAlgorithm,
) -> Result<AlgorithmResult> {
    let run = &cfg.run;
    let options = TrialOptions {
        snapshot_at: run.diagnostics_at.map(|i| i - 1),
        tail: run.steady_window,
    };
    let trajectories: Vec<Trajectory> = (0..run.trials)
        .into_par_iter()
        .map(|r| {
            run_trial(
                &prepared.combination,
                &prepared.ground_truth,
                &prepared.profiles,
                &alg.config,
                run.iterations,
                trial_path(run.seed, run.paired, index, r),
                &options,
            )
            .map_err(|e| Error::Trial {
                label: alg.label.clone(),
                trial: r,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let (node_msd, nodes) = average_deviation(&trajectories)?;
    let network = network_curve(&node_msd, nodes);
    let window = run.steady_window.min(run.iterations);
    let start = run.iterations - window;
    let steady_msd_db = to_db(tail_mean(network[start..].iter().copied(), window));
    let node_steady_msd_db = (0..nodes)
        .map(|k| {
            to_db(tail_mean(
                (start..run.iterations).map(|i| node_msd[i * nodes + k]),
                window,
            ))
        })
        .collect();

    let diverged_trials = trajectories.iter().filter(|t| t.diverged()).count();
    let survivors: Vec<&Vec<f64>> = trajectories.iter().filter_map(|t| t.tail_mean.as_ref()).collect();
    let mean_estimate = survivors.first().map(|first| {
        let mut acc = vec![0.0; first.len()];
        for s in &survivors {
            acc.iter_mut().zip(s.iter()).for_each(|(a, x)| *a += x);
        }
        acc.into_iter().map(|a| a / survivors.len() as f64).collect()
    });
    let diagnostics = trajectories
        .iter()
        .enumerate()
        .filter_map(|(r, t)| t.snapshot.clone().map(|s| (r, s)))
        .collect();

    Ok(AlgorithmResult {
        label: alg.label.clone(),
        msd_db: network.into_iter().map(to_db).collect(),
        node_msd,
        steady_msd_db,
        node_steady_msd_db,
        diverged_trials,
        mean_estimate,
        diagnostics,
        theory: None,
    })
}
