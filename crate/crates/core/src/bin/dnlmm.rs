use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dnlmm::harness::{preset, run_experiment, run_theory, write_outputs, ExperimentConfig, PRESET_NAMES};
use dnlmm::Result;

#[derive(Parser)]
#[command(name = "dnlmm", version, about = "Diffusion M-estimate adaptive network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON or TOML file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also evaluate the analytical model.
        #[arg(long)]
        theory: bool,
    },
    /// Run a built-in experiment.
    Preset {
        #[arg(long)]
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        /// Print the preset configuration as JSON instead of running it.
        #[arg(long)]
        dump: bool,
    },
    /// Evaluate only the analytical model.
    Theory {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a configuration file and print what it describes.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// List preset names.
    Presets,
}

fn output_dir(cli: Option<PathBuf>, cfg: &ExperimentConfig, fallback: &str) -> PathBuf {
    cli.or_else(|| cfg.run.output.clone())
        .unwrap_or_else(|| Path::new("results").join(fallback))
}

fn execute(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let results = run_experiment(cfg)?;
    write_outputs(&results, cfg, out)?;
    for alg in &results.algorithms {
        print!(
            "{:<28} steady {:>9.3} dB  diverged {:>3}/{}",
            alg.label, alg.steady_msd_db, alg.diverged_trials, results.trials
        );
        match &alg.theory {
            Some(Ok(t)) => match t.report.steady_network_msd_db {
                Some(db) => print!("  theory {db:>9.3} dB"),
                None => print!("  theory -"),
            },
            Some(Err(_)) => print!("  theory n/a"),
            None => {}
        }
        println!();
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            trials,
            seed,
            out,
            theory,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(r) = trials {
                cfg.run.trials = r;
            }
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            cfg.run.theory |= theory;
            let out = output_dir(out, &cfg, &stem(&config));
            execute(&cfg, &out)
        }
        Command::Preset {
            name,
            out,
            trials,
            iterations,
            dump,
        } => {
            let mut cfg = preset(&name)?;
            if let Some(r) = trials {
                cfg.run.trials = r;
            }
            if let Some(t) = iterations {
                cfg.run.iterations = t;
            }
            if dump {
                println!("{}", cfg.to_json()?);
                return Ok(());
            }
            let out = output_dir(out, &cfg, &name);
            execute(&cfg, &out)
        }
        Command::Theory { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let results = run_theory(&cfg)?;
            let mut report = serde_json::Map::new();
            for (label, outcome) in &results {
                let value = match outcome {
                    Ok(t) => serde_json::to_value(&t.report)?,
                    Err(e) => serde_json::json!({ "error": e }),
                };
                report.insert(label.clone(), value);
            }
            let text = serde_json::to_string_pretty(&report)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("theory_report.json"), format!("{text}\n"))?;
                for (label, outcome) in &results {
                    if let Ok(t) = outcome {
                        let mut csv = String::from("iteration,msd_db\n");
                        for (i, v) in t.network_msd_db.iter().enumerate() {
                            csv.push_str(&format!("{},{v}\n", i + 1));
                        }
                        std::fs::write(dir.join(format!("theory_{label}.csv")), csv)?;
                    }
                }
            }
            println!("{text}");
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let prepared = cfg.prepare()?;
            println!(
                "ok: {} nodes, {} edges, L = {}, {} algorithm(s), {} trial(s) x {} iterations, digest {}",
                prepared.topology.node_count(),
                prepared.topology.edges().len(),
                prepared.ground_truth.len(),
                cfg.algorithms.len(),
                cfg.run.trials,
                cfg.run.iterations,
                cfg.digest()?
            );
            Ok(())
        }
        Command::Presets => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
