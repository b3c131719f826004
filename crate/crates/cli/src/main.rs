//! Batch front door: run experiments from config files, list and describe
//! model presets, write trajectory CSVs and analysis reports.

mod config;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{describe_preset, preset_names, ExperimentConfig};

#[derive(Parser)]
#[command(name = "collapse-lab", version, about = "Collapse-model simulation lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config file.
    Run {
        /// Path to the experiment config.
        config: PathBuf,
        /// Override scalar config fields: --set grid.dt=1e-3 (repeatable).
        #[arg(long = "set", value_name = "PATH=VALUE")]
        set: Vec<String>,
        /// Worker threads (default: COLLAPSE_LAB_WORKERS or all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// List the built-in model presets.
    ListPresets,
    /// Describe one preset: equations, parameters, defaults.
    Describe { preset: String },
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run() -> collapse_core::Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::ListPresets => {
            for name in preset_names() {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Describe { preset } => {
            println!("{}", describe_preset(&preset)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config, set, workers } => {
            let workers = workers.or_else(|| {
                std::env::var("COLLAPSE_LAB_WORKERS").ok().and_then(|v| v.parse().ok())
            });
            if let Some(n) = workers {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build_global()
                    .map_err(|e| collapse_core::Error::InvalidParameter {
                        name: "workers",
                        message: e.to_string(),
                    })?;
            }
            let overrides: Vec<(String, String)> = set
                .iter()
                .map(|s| {
                    s.split_once('=')
                        .map(|(a, b)| (a.to_string(), b.to_string()))
                        .ok_or_else(|| collapse_core::Error::Config {
                            path: s.clone(),
                            message: "override must look like path=value".into(),
                        })
                })
                .collect::<collapse_core::Result<_>>()?;
            let text = std::fs::read_to_string(&config)?;
            let raw: serde_json::Value = serde_json::from_str(&text)?;
            let mut raw_with_overrides = raw;
            for (path, value) in &overrides {
                config::apply_override(&mut raw_with_overrides, path, value)?;
            }
            let experiment: ExperimentConfig =
                serde_json::from_value(raw_with_overrides.clone())?;
            let outcome = runner::run(&experiment, &raw_with_overrides)?;
            for (name, report) in &outcome.reports {
                println!("{name}: {}", if report.pass { "pass" } else { "FAIL" });
            }
            if outcome.reports.is_empty() {
                println!("trajectories written to {}", experiment.output_dir.display());
            }
            Ok(if outcome.all_pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}
