//! Acceptance suite. Prints one PASS/FAIL line per criterion with the
//! measured values. Exits non-zero on any FAIL only when
//! `ACCEPTANCE_STRICT=1`, so a plain `cargo test` reports without aborting.
//! `ACCEPTANCE_ONLY=1,8` runs a subset.

use std::error::Error;
use std::time::Instant;

use dnlmm::diffusion::{to_db, AlgorithmConfig};
use dnlmm::harness::{d_lmm_bound, preset, run_experiment, run_theory, ExperimentConfig, LabeledAlgorithm, ResultSet};
use dnlmm::robust::{AttractorConfig, ExpForm, ScoreFunction};
use dnlmm::signals::generate_ground_truth;
use dnlmm::theory::{attractor_moments, BetaStar};

type Outcome = Result<(bool, String), Box<dyn Error>>;
type Check = (&'static str, fn() -> Outcome);

const UPSILON: f64 = 20.0;

fn run(cfg: &ExperimentConfig) -> Result<ResultSet, Box<dyn Error>> {
    Ok(run_experiment(cfg)?)
}

fn steady(r: &ResultSet, label: &str) -> Result<f64, Box<dyn Error>> {
    Ok(r.get(label).ok_or_else(|| format!("missing {label}"))?.steady_msd_db)
}

fn dsnlmm(mu: f64, window: usize, zeta: f64, beta: f64) -> AlgorithmConfig {
    AlgorithmConfig::new(ScoreFunction::ModifiedHuber, mu)
        .with_threshold(window, zeta)
        .with_attractor(
            AttractorConfig::ExpL0 {
                upsilon: UPSILON,
                form: ExpForm::Taylor,
            },
            beta,
        )
}

/// Transient and steady-state agreement on the small network.
fn transient_agreement() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["fig9", "fig9b"] {
        let r = run(&preset(name)?)?;
        let a = r.get("D-NLMM").ok_or("missing D-NLMM")?;
        let theory = a.theory.as_ref().ok_or("no theory")?.as_ref().map_err(|e| e.clone())?;
        let (worst_at, worst) = a
            .msd_db
            .iter()
            .zip(&theory.network_msd_db)
            .enumerate()
            .skip(50)
            .map(|(i, (s, t))| (i + 1, (s - t).abs()))
            .fold((0, 0.0), |best, x| if x.1 > best.1 { x } else { best });
        let model_steady = theory.report.steady_network_msd_db.ok_or("no steady state")?;
        let steady_gap = (model_steady - a.steady_msd_db).abs();
        pass &= worst <= 1.5 && steady_gap <= 1.5;
        parts.push(format!(
            "{name}: max gap {worst:.2} dB at i={worst_at}, steady sim {:.2} vs model {model_steady:.2} dB",
            a.steady_msd_db
        ));
    }
    Ok((pass, parts.join("; ")))
}

/// Per-node steady state at μ = 0.1; larger steps are reported only.
fn node_steady_state() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["fig10", "fig10b"] {
        let r = run(&preset(name)?)?;
        let mut gaps = Vec::new();
        for a in &r.algorithms {
            let theory = a.theory.as_ref().ok_or("no theory")?.as_ref().map_err(|e| e.clone())?;
            let model = theory.report.steady_node_msd_db.as_ref().ok_or("no steady state")?;
            let worst = model
                .iter()
                .zip(&a.node_steady_msd_db)
                .map(|(m, s)| (m - s).abs())
                .fold(0.0, f64::max);
            if a.label == "D-NLMM_mu0.1" {
                pass &= worst <= 2.0;
            }
            gaps.push(format!("{} {worst:.2}", a.label.trim_start_matches("D-NLMM_")));
        }
        parts.push(format!("{name} worst node gap dB: {}", gaps.join(", ")));
    }
    Ok((pass, parts.join("; ")))
}

fn sparsity_gain() -> Outcome {
    let r = run(&preset("fig6a")?.select(&["D-NLMM", "D-SNLMM"])?)?;
    let (plain, sparse) = (steady(&r, "D-NLMM")?, steady(&r, "D-SNLMM")?);
    let gain = plain - sparse;
    Ok((
        (5.0..=9.0).contains(&gain),
        format!("D-NLMM {plain:.2} dB, D-SNLMM {sparse:.2} dB, gain {gain:.2} dB (want 7 ± 2)"),
    ))
}

fn robustness_contrast() -> Outcome {
    let r = run(&preset("fig6b")?.select(&["DNLMS", "l0-DNLMS", "D-NLMM"])?)?;
    let m = r.get("D-NLMM").ok_or("missing D-NLMM")?;
    let mut pass = m.diverged_trials == 0 && m.steady_msd_db.is_finite();
    let mut parts = vec![format!("D-NLMM {:.2} dB", m.steady_msd_db)];
    for label in ["DNLMS", "l0-DNLMS"] {
        let a = r.get(label).ok_or("missing competitor")?;
        let above = a.steady_msd_db - m.steady_msd_db;
        pass &= a.diverged_trials > 0 || above > 20.0;
        parts.push(format!(
            "{label} {:.2} dB ({above:.1} dB above, {} diverged)",
            a.steady_msd_db, a.diverged_trials
        ));
    }
    // monotone up to Monte Carlo ripple: 50-iteration block means never
    // climb more than 1 dB above the lowest block seen so far
    let blocks: Vec<f64> = m
        .msd_db
        .chunks(50)
        .map(|b| b.iter().sum::<f64>() / b.len() as f64)
        .collect();
    let mut low = f64::INFINITY;
    let mut rise: f64 = 0.0;
    for b in &blocks {
        rise = rise.max(b - low);
        low = low.min(*b);
    }
    pass &= rise <= 1.0;
    parts.push(format!("largest block rise {rise:.2} dB"));
    Ok((pass, parts.join(", ")))
}

/// Converged and diverged trial counts. A trial converges when it does not
/// diverge and ends at least 10 dB below the initial deviation ‖w°‖².
fn trial_outcomes(r: &ResultSet, label: &str) -> Result<(usize, usize), Box<dyn Error>> {
    let a = r.get(label).ok_or_else(|| format!("missing {label}"))?;
    let start: f64 = r.ground_truth.iter().map(|x| x * x).sum();
    let l = r.length;
    let converged = a
        .diagnostics
        .iter()
        .filter(|(_, w)| {
            let sd: f64 = w
                .chunks(l)
                .map(|wk| {
                    wk.iter()
                        .zip(&r.ground_truth)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                })
                .sum::<f64>()
                / r.nodes as f64;
            to_db(sd) <= to_db(start) - 10.0
        })
        .count();
    Ok((converged, a.diverged_trials))
}

fn stability_bracketing() -> Outcome {
    let mut cfg = preset("fig2")?.select(&["D-NLMM_mu1.9", "D-LMM_t0.5", "D-LMM_t1.1"])?;
    let bound = d_lmm_bound(&cfg)?;
    for (label, t) in [("D-LMM_t0.5", 0.5), ("D-LMM_t1.1", 1.1)] {
        let mu = cfg.algorithm(label).ok_or("missing D-LMM")?.config.step_size.at(0);
        if (mu - t * bound).abs() > 1e-12 * bound {
            return Err(format!("{label} step {mu} is not {t} x {bound}").into());
        }
    }
    cfg.run.diagnostics_at = Some(cfg.run.iterations);
    let r = run(&cfg)?;
    let trials = r.trials;
    let (nlmm, _) = trial_outcomes(&r, "D-NLMM_mu1.9")?;
    let (half, half_div) = trial_outcomes(&r, "D-LMM_t0.5")?;
    let (_, over_div) = trial_outcomes(&r, "D-LMM_t1.1")?;
    let pass = nlmm == trials && over_div >= 95 * trials / 100 && half == trials;
    Ok((
        pass,
        format!(
            "bound {bound:.4}; D-NLMM mu=1.9 converged {nlmm}/{trials}; D-LMM 1.1x diverged {over_div}/{trials}; \
             D-LMM 0.5x converged {half}/{trials} (diverged {half_div})"
        ),
    ))
}

fn unbiasedness() -> Outcome {
    let mut cfg = preset("fig6a")?.select(&["D-NLMM"])?;
    cfg.run.trials = 200;
    let r = run(&cfg)?;
    let mean = r
        .get("D-NLMM")
        .and_then(|a| a.mean_estimate.as_ref())
        .ok_or("no mean estimate")?;
    let norm = r.ground_truth.iter().map(|x| x * x).sum::<f64>().sqrt();
    let worst = mean
        .chunks(r.length)
        .map(|wk| {
            wk.iter()
                .zip(&r.ground_truth)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max);
    let mut pass = worst < 0.01 * norm;
    let mut parts = vec![format!(
        "D-NLMM worst node |E w - w°| = {:.2e} (limit {:.2e})",
        worst,
        0.01 * norm
    )];

    // attractor bias: a truth with one tap inside the attraction band
    let truth = generate_ground_truth(32, 2, 3)?;
    let mut cfg = preset("fig6a")?.select(&["D-NLMM", "D-SNLMM"])?;
    cfg.signals.ground_truth = Some(truth.as_slice().to_vec());
    cfg.run.trials = 200;
    cfg.run.diagnostics_at = Some(cfg.run.iterations);
    let r = run(&cfg)?;
    let w_o = &r.ground_truth;
    let l = r.length;
    let zeros: Vec<usize> = (0..l).filter(|&j| w_o[j] == 0.0).collect();
    let small = (0..l)
        .find(|&j| w_o[j] != 0.0 && w_o[j].abs() < 1.0 / UPSILON)
        .ok_or("no small tap")?;
    let mut rms = Vec::new();
    for label in ["D-NLMM", "D-SNLMM"] {
        let a = r.get(label).ok_or("missing result")?;
        let (mut sq, mut count) = (0.0, 0usize);
        // node-averaged small tap per trial, signed toward w°
        let mut taps = Vec::new();
        for (_, w) in &a.diagnostics {
            let mut tap = 0.0;
            for wk in w.chunks(l) {
                for &j in &zeros {
                    sq += wk[j] * wk[j];
                    count += 1;
                }
                tap += wk[small] * w_o[small].signum();
            }
            taps.push(tap / r.nodes as f64);
        }
        let n = taps.len() as f64;
        let m = taps.iter().sum::<f64>() / n;
        let se = (taps.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        rms.push((sq / count as f64).sqrt());
        let target = w_o[small].abs();
        if label == "D-SNLMM" {
            pass &= m < target - 3.0 * se && m > -3.0 * se;
        }
        parts.push(format!("{label} tap |w°|={target:.4}: mean {m:.4} ± {se:.1e}"));
    }
    pass &= rms[1] < rms[0];
    parts.push(format!("zero-tap RMS D-NLMM {:.2e}, D-SNLMM {:.2e}", rms[0], rms[1]));
    Ok((pass, parts.join("; ")))
}

/// Zero crossing of the steady-state difference, interpolated on log β.
fn benefit_edge(grid: &[f64], diff: &[f64]) -> Option<f64> {
    let first = diff.iter().position(|d| *d < 0.0)?;
    let k = first + diff[first..].iter().position(|d| *d >= 0.0)?;
    let (a, b) = (grid[k - 1].ln(), grid[k].ln());
    let t = diff[k - 1] / (diff[k - 1] - diff[k]);
    Some((a + t * (b - a)).exp())
}

struct Sweep {
    diff: Vec<f64>,
    beta_star: BetaStar,
}

fn beta_sweep(grid: &[f64], nonzero: usize, truth_seed: u64) -> Result<Sweep, Box<dyn Error>> {
    let mut cfg = preset("fig9")?;
    cfg.signals.nonzero = Some(nonzero);
    cfg.signals.ground_truth_seed = truth_seed;
    cfg.run.theory = false;
    cfg.run.iterations = 2000;
    let base = cfg.algorithms[0].config.clone();
    let (window, zeta) = (base.window, base.zeta);
    let mu = base.step_size.at(0);
    cfg.algorithms = std::iter::once(LabeledAlgorithm::new("ref", base))
        .chain(
            grid.iter()
                .map(|&b| LabeledAlgorithm::new(format!("b{b:e}"), dsnlmm(mu, window, zeta, b))),
        )
        .collect();

    let mut model = cfg.clone().select(&["ref"])?;
    model.algorithms[0].config = dsnlmm(mu, window, zeta, grid[0]);
    model.run.iterations = 1;
    let (_, overlay) = run_theory(&model)?.pop().ok_or("no theory")?;
    let report = overlay?.report;
    let beta_star = report
        .beta_star
        .ok_or_else(|| report.beta_star_error.unwrap_or_default())?;

    let r = run(&cfg)?;
    let reference = steady(&r, "ref")?;
    let diff = grid
        .iter()
        .map(|b| Ok(steady(&r, &format!("b{b:e}"))? - reference))
        .collect::<Result<Vec<f64>, Box<dyn Error>>>()?;
    Ok(Sweep { diff, beta_star })
}

/// "Beats" means at least 0.1 dB lower than D-NLMM at steady state.
fn beta_region() -> Outcome {
    const MARGIN: f64 = 0.1;
    let grid: Vec<f64> = (0..15).map(|k| 1e-5 * 10f64.powf(k as f64 / 4.0)).collect();

    let sparse = beta_sweep(&grid, 2, 0)?;
    let wins = sparse.diff.iter().filter(|d| **d < -MARGIN).count();
    let edge = benefit_edge(&grid, &sparse.diff);
    let star = sparse.beta_star.bound();
    let ratio = match (edge, star) {
        (Some(e), Some(s)) => Some(s / e),
        _ => None,
    };
    let best = sparse.diff.iter().copied().fold(f64::INFINITY, f64::min);

    // Q = L with every tap outside the attraction band
    let seed = (0..1000u64)
        .find(|&s| {
            generate_ground_truth(5, 5, s)
                .map(|w| w.as_slice().iter().all(|x| x.abs() >= 1.0 / UPSILON))
                .unwrap_or(false)
        })
        .ok_or("no dense truth")?;
    let dense = beta_sweep(&grid, 5, seed)?;
    let dense_wins = dense.diff.iter().filter(|d| **d < -MARGIN).count();
    let dense_best = dense.diff.iter().copied().fold(f64::INFINITY, f64::min);

    let pass = wins > 0 && dense_wins == 0 && ratio.is_some_and(|q| (1.0 / 3.0..=3.0).contains(&q));
    let fmt = |x: Option<f64>| x.map_or("none".to_string(), |v| format!("{v:.2e}"));
    Ok((
        pass,
        format!(
            "Q=2: {wins}/{} grid points win (best {best:.2} dB), edge {}, beta* {}, ratio {}; \
             Q=L (truth seed {seed}): {dense_wins} win (best {dense_best:.2} dB), beta* {}",
            grid.len(),
            fmt(edge),
            fmt(star),
            ratio.map_or("n/a".to_string(), |q| format!("{q:.2}")),
            fmt(dense.beta_star.bound()),
        ),
    ))
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration.
fn legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// `∫ g(x) φ(x) dx` over `[lo, hi]` for `φ` the `N(mean, sd²)` density, by
/// composite Gauss-Legendre with panels no wider than `sd / 4`. Also returns
/// `∫ |g| φ`, the scale for the relative error.
fn gauss_integral<G: Fn(f64) -> f64>(g: G, lo: f64, hi: f64, mean: f64, sd: f64, rule: &[(f64, f64)]) -> (f64, f64) {
    let pdf = |x: f64| {
        let z = (x - mean) / sd;
        (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
    };
    let panels = (((hi - lo) / (0.25 * sd)).ceil() as usize).clamp(16, 4096);
    let h = (hi - lo) / panels as f64;
    let (mut value, mut scale) = (0.0, 0.0);
    for p in 0..panels {
        let mid = lo + (p as f64 + 0.5) * h;
        for &(x, w) in rule {
            let t = mid + 0.5 * h * x;
            let v = g(t) * pdf(t) * 0.5 * h * w;
            value += v;
            scale += v.abs();
        }
    }
    (value, scale)
}

fn moment_oracle() -> Outcome {
    let rule = legendre(20);
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    for x_bar in [-0.04, -0.01, 0.0, 0.02, 0.1] {
        for sd in [1e-3, 5e-3, 0.01, 0.05, 0.2] {
            for upsilon in [10.0, 20.0, 40.0] {
                let closed = attractor_moments(x_bar, sd, upsilon)?;
                let h = 1.0 / upsilon;
                let mut quad = [(0.0, 0.0); 3];
                for (s, lo, hi) in [(1.0, 0.0, h), (-1.0, -h, 0.0)] {
                    let f = move |x: f64| s * upsilon - upsilon * upsilon * x;
                    let parts = [
                        gauss_integral(f, lo, hi, x_bar, sd, &rule),
                        gauss_integral(|x| x * f(x), lo, hi, x_bar, sd, &rule),
                        gauss_integral(|x| f(x) * f(x), lo, hi, x_bar, sd, &rule),
                    ];
                    for (q, p) in quad.iter_mut().zip(parts) {
                        q.0 += p.0;
                        q.1 += p.1;
                    }
                }
                for (name, c, (q, scale)) in [
                    ("Ef", closed.ef, quad[0]),
                    ("Exf", closed.exf, quad[1]),
                    ("Eff", closed.eff, quad[2]),
                ] {
                    if scale == 0.0 && c == 0.0 {
                        continue;
                    }
                    let rel = (c - q).abs() / scale.max(c.abs());
                    if rel > worst {
                        worst = rel;
                        worst_at = format!("{name} at x={x_bar}, sd={sd}, u={upsilon}");
                    }
                }
            }
        }
    }
    Ok((
        worst <= 1e-8,
        format!("worst relative error {worst:.2e} ({worst_at}) over 75 points"),
    ))
}

fn proximal_equivalence() -> Outcome {
    let r = run(&preset("fig14")?)?;
    let (s, l1, l0) = (steady(&r, "D-SNLMM")?, steady(&r, "prox-l1")?, steady(&r, "prox-l0")?);
    let pass = (l0 - s).abs() <= 1.5 && s < l1 && l0 < l1;
    Ok((
        pass,
        format!("D-SNLMM {s:.2} dB, prox-l0 {l0:.2} dB, prox-l1 {l1:.2} dB"),
    ))
}

fn reduction_identities() -> Outcome {
    let mut cfg = preset("fig6a")?.select(&["DNLMS", "D-NLMM"])?;
    cfg.run.trials = 5;
    cfg.run.iterations = 800;
    let nlmm = cfg.algorithm("D-NLMM").ok_or("missing D-NLMM")?.config.clone();
    let mut open = cfg.algorithm("DNLMS").ok_or("missing DNLMS")?.config.clone();
    open.score = ScoreFunction::ModifiedHuber;
    open.kappa = f64::INFINITY;
    cfg.algorithms.push(LabeledAlgorithm::new("MH-open", open));
    cfg.algorithms.push(LabeledAlgorithm::new(
        "prox-l1-0",
        nlmm.clone().with_attractor(AttractorConfig::SoftThreshold, 0.0),
    ));
    cfg.algorithms.push(LabeledAlgorithm::new(
        "prox-l0-0",
        nlmm.with_attractor(AttractorConfig::WeightedSoftThreshold { upsilon: UPSILON }, 0.0),
    ));
    let r = run(&cfg)?;
    let curve = |label: &str| r.get(label).map(|a| a.node_msd.clone()).ok_or("missing result");
    let mh = curve("MH-open")? == curve("DNLMS")?;
    let l1 = curve("prox-l1-0")? == curve("D-NLMM")?;
    let l0 = curve("prox-l0-0")? == curve("D-NLMM")?;
    Ok((
        mh && l1 && l0,
        format!("MH with infinite threshold == DNLMS: {mh}; zero-strength prox (l1, l0) == D-NLMM: {l1}, {l0}"),
    ))
}

fn main() {
    let criteria: [Check; 10] = [
        ("theory transient and steady state", transient_agreement),
        ("node-wise steady state", node_steady_state),
        ("sparsity gain", sparsity_gain),
        ("robustness contrast", robustness_contrast),
        ("stability bracketing", stability_bracketing),
        ("unbiasedness and attractor bias", unbiasedness),
        ("beta region", beta_region),
        ("attractor moment oracle", moment_oracle),
        ("proximal equivalence", proximal_equivalence),
        ("reduction identities", reduction_identities),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let (mut passed, mut failed) = (0, 0);
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        if pass {
            passed += 1;
        } else {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {detail} [{:.1}s]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {passed} passed, {failed} failed");
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
