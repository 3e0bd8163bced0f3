//! Result files. Every CSV uses `iteration` = number of completed updates (1-based).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::{json, Value};

use super::{AlgorithmResult, ExperimentConfig, ResultSet, TheoryOverlay};
use crate::error::Result;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_curve(dir: &Path, name: &str, curve: &[f64]) -> Result<()> {
    let mut out = create(dir, name)?;
    writeln!(out, "iteration,msd_db")?;
    for (i, v) in curve.iter().enumerate() {
        writeln!(out, "{},{v}", i + 1)?;
    }
    out.flush()?;
    Ok(())
}

fn write_nodes(dir: &Path, name: &str, values: &[f64]) -> Result<()> {
    let mut out = create(dir, name)?;
    writeln!(out, "node,steady_msd_db")?;
    for (k, v) in values.iter().enumerate() {
        writeln!(out, "{k},{v}")?;
    }
    out.flush()?;
    Ok(())
}

fn write_node_trajectory(dir: &Path, name: &str, node_msd: &[f64], nodes: usize) -> Result<()> {
    let mut out = create(dir, name)?;
    writeln!(out, "iteration,node,squared_deviation")?;
    for (i, row) in node_msd.chunks(nodes).enumerate() {
        for (k, v) in row.iter().enumerate() {
            writeln!(out, "{},{k},{v}", i + 1)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_diagnostics(dir: &Path, alg: &AlgorithmResult, w_o: &[f64]) -> Result<()> {
    let mut out = create(dir, &format!("diagnostics_{}.csv", alg.label))?;
    writeln!(out, "trial,node,coefficient,error")?;
    let l = w_o.len();
    for (trial, estimates) in &alg.diagnostics {
        for (j, w) in estimates.iter().enumerate() {
            writeln!(out, "{trial},{},{},{}", j / l, j % l, w_o[j % l] - w)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn theory_json(theory: &Option<std::result::Result<TheoryOverlay, String>>) -> Value {
    match theory {
        None => Value::Null,
        Some(Ok(t)) => json!({
            "final_msd_db": t.network_msd_db.last(),
            "report": t.report,
        }),
        Some(Err(e)) => json!({ "error": e }),
    }
}

/// Write all CSV files and `summary.json` into `dir`, creating it if needed.
///
/// Contents depend only on the configuration, so reruns are byte-identical.
pub fn write_outputs(results: &ResultSet, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut algorithms = Vec::with_capacity(results.algorithms.len());
    for alg in &results.algorithms {
        write_curve(dir, &format!("msd_{}.csv", alg.label), &alg.msd_db)?;
        write_nodes(dir, &format!("nodes_{}.csv", alg.label), &alg.node_steady_msd_db)?;
        if !alg.diagnostics.is_empty() {
            write_diagnostics(dir, alg, &results.ground_truth)?;
        }
        if let Some(Ok(t)) = &alg.theory {
            write_curve(dir, &format!("theory_{}.csv", alg.label), &t.network_msd_db)?;
            write_node_trajectory(
                dir,
                &format!("theory_trajectory_{}.csv", alg.label),
                &t.node_msd,
                results.nodes,
            )?;
            if let Some(nodes) = &t.report.steady_node_msd_db {
                write_nodes(dir, &format!("theory_nodes_{}.csv", alg.label), nodes)?;
            }
        }
        let mean_error_norm = alg.mean_estimate.as_ref().map(|m| {
            m.chunks(results.length)
                .map(|w| {
                    w.iter()
                        .zip(&results.ground_truth)
                        .map(|(a, b)| (b - a) * (b - a))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect::<Vec<_>>()
        });
        algorithms.push(json!({
            "label": alg.label,
            "steady_msd_db": alg.steady_msd_db,
            "final_msd_db": alg.msd_db.last(),
            "node_steady_msd_db": alg.node_steady_msd_db,
            "diverged_trials": alg.diverged_trials,
            "node_mean_error_norm": mean_error_norm,
            "theory": theory_json(&alg.theory),
        }));
    }
    let summary = json!({
        "config_digest": results.config_digest,
        "nodes": results.nodes,
        "length": results.length,
        "iterations": results.iterations,
        "trials": results.trials,
        "seed": cfg.run.seed,
        "ground_truth": results.ground_truth,
        "algorithms": algorithms,
    });
    let mut out = create(dir, "summary.json")?;
    out.write_all(serde_json::to_string_pretty(&summary)?.as_bytes())?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}
