//! Experiment execution: trajectories, analyses, reports, summary.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use collapse_core::analysis::collapse::{
    born_statistics, decay_fit_window, ensemble_mean_path, fit_exponential_decay,
};
use collapse_core::analysis::jumps::{
    dwell_time_test, empirical_rates, extract_jumps, extract_jumps_scalar, liouvillian_from_model,
    theoretical_rates,
};
use collapse_core::analysis::spikes::{
    detect_spikes_series, jump_completion_probability, spike_survival, survival_log_slope, Origin,
};
use collapse_core::error::{Error, Result};
use collapse_core::hmm::filtered_law_equivalence;
use collapse_core::models::{averaged_me_evolve, thermal_qubit_model};
use collapse_core::quantum::QubitState;
use collapse_core::report::AnalysisReport;
use collapse_core::sde::{
    simulate_pair_ensemble, simulate_scalar_ensemble, simulate_sme_ensemble, trajectory_header,
    write_density_csv, write_qubit_csv, write_scalar_csv, GridSpec,
};
use num_complex::Complex64;
use serde_json::json;

use crate::config::{
    resolve_initial_density, resolve_initial_p, resolve_model, AnalysisConfig, DecayObservable,
    ExperimentConfig, ResolvedModel,
};

pub struct RunOutcome {
    pub all_pass: bool,
    pub reports: Vec<(String, AnalysisReport)>,
}

/// Execute one experiment (or a sweep of them) and write artifacts under
/// `config.output_dir`: config.json, summary.json, reports/*.json and
/// optionally trajectories/*.csv.
pub fn run(config: &ExperimentConfig, raw_config: &serde_json::Value) -> Result<RunOutcome> {
    let validation = config.validate()?;
    for w in &validation.warnings {
        eprintln!("warning: {w}");
    }
    let out_dir = &config.output_dir;
    fs::create_dir_all(out_dir.join("reports"))?;
    if config.write_trajectories {
        fs::create_dir_all(out_dir.join("trajectories"))?;
    }
    fs::write(out_dir.join("config.json"), serde_json::to_string_pretty(raw_config)?)?;

    let mut reports: Vec<(String, AnalysisReport)> = Vec::new();
    match &config.sweep {
        None => run_single(config, String::new(), &mut reports)?,
        Some(sweep) => {
            let leaf = sweep.path.rsplit('.').next().unwrap_or("value");
            for &value in &sweep.values {
                let mut raw = raw_config.clone();
                crate::config::apply_override(&mut raw, &sweep.path, &format!("{value}"))?;
                let mut sub: ExperimentConfig = serde_json::from_value(raw)?;
                sub.sweep = None;
                let label = format!("{leaf}{value}_");
                run_single(&sub, label, &mut reports)?;
            }
        }
    }

    let all_pass = reports.iter().all(|(_, r)| r.pass);
    for (name, report) in &reports {
        let path = out_dir.join("reports").join(format!("{name}.json"));
        fs::write(path, serde_json::to_string_pretty(report)?)?;
    }
    let summary = json!({
        "analyses": reports.iter().map(|(name, r)| json!({"name": name, "pass": r.pass})).collect::<Vec<_>>(),
        "all_pass": all_pass,
        "warnings": validation.warnings,
    });
    fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(RunOutcome { all_pass, reports })
}

fn run_single(
    config: &ExperimentConfig,
    label: String,
    reports: &mut Vec<(String, AnalysisReport)>,
) -> Result<()> {
    let model = resolve_model(&config.model)?;
    let grid = GridSpec::from_horizon(config.grid.dt, config.grid.t_final, config.grid.record_stride)?;
    let seed = config.ensemble.master_seed;
    let n_traj = config.ensemble.n_traj;

    // The decay/coherence analysis needs the (p, u) pair; everything else on
    // a scalar model uses the population alone.
    let wants_coherence = config
        .analyses
        .iter()
        .any(|a| matches!(a, AnalysisConfig::Decay { observable: DecayObservable::Coherence, .. }));

    match &model {
        ResolvedModel::Scalar(spec) => {
            let p0 = resolve_initial_p(&config.initial);
            if wants_coherence {
                let u0 = Complex64::new(
                    config.initial.u_re.unwrap_or(0.35),
                    config.initial.u_im.unwrap_or(0.0),
                );
                let initial = QubitState::new(p0, u0)?;
                let records = simulate_pair_ensemble(spec.gamma, initial, &grid, seed, n_traj)?;
                if config.write_trajectories {
                    for rec in &records {
                        let path = config.output_dir.join("trajectories").join(format!(
                            "{label}traj_{:04}.csv",
                            rec.randomness.trajectory_index
                        ));
                        let mut w = BufWriter::new(fs::File::create(&path)?);
                        write_qubit_csv(rec, &mut w)?;
                        write_header_sidecar(&path, &model, rec)?;
                    }
                }
                for analysis in &config.analyses {
                    run_pair_analysis(config, spec, analysis, &records, &label, reports)?;
                }
            } else {
                let records = simulate_scalar_ensemble(spec, p0, &grid, seed, n_traj)?;
                if config.write_trajectories {
                    for rec in &records {
                        let path = config.output_dir.join("trajectories").join(format!(
                            "{label}traj_{:04}.csv",
                            rec.randomness.trajectory_index
                        ));
                        let mut w = BufWriter::new(fs::File::create(&path)?);
                        write_scalar_csv(rec, &mut w)?;
                        write_header_sidecar(&path, &model, rec)?;
                    }
                }
                for analysis in &config.analyses {
                    run_scalar_analysis(config, spec, analysis, &records, p0, &label, reports)?;
                }
            }
        }
        ResolvedModel::Sme(spec) => {
            let rho0 = resolve_initial_density(&config.initial, spec.dim)?;
            let records = simulate_sme_ensemble(spec, &rho0, &grid, seed, n_traj, config.scheme)?;
            if config.write_trajectories {
                for rec in &records {
                    let path = config.output_dir.join("trajectories").join(format!(
                        "{label}traj_{:04}.csv",
                        rec.randomness.trajectory_index
                    ));
                    let mut w = BufWriter::new(fs::File::create(&path)?);
                    write_density_csv(rec, &mut w)?;
                    write_header_sidecar(&path, &model, rec)?;
                }
            }
            for analysis in &config.analyses {
                run_sme_analysis(config, spec, analysis, &records, &rho0, &label, reports)?;
            }
        }
    }
    Ok(())
}

fn write_header_sidecar<S>(
    csv_path: &Path,
    model: &ResolvedModel,
    record: &collapse_core::sde::TrajectoryRecord<S>,
) -> Result<()> {
    let header = trajectory_header(model.description(), record);
    let path = csv_path.with_extension("json");
    fs::write(path, serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

fn push(reports: &mut Vec<(String, AnalysisReport)>, label: &str, name: &str, report: AnalysisReport) {
    reports.push((format!("{label}{name}"), report));
}

fn run_scalar_analysis(
    config: &ExperimentConfig,
    spec: &collapse_core::models::ScalarModelSpec,
    analysis: &AnalysisConfig,
    records: &[collapse_core::sde::TrajectoryRecord<f64>],
    p0: f64,
    label: &str,
    reports: &mut Vec<(String, AnalysisReport)>,
) -> Result<()> {
    match analysis {
        AnalysisConfig::Born { threshold, expected } => {
            let finals: Vec<f64> = records.iter().map(|r| *r.final_state()).collect();
            let stats = born_statistics(&finals, *threshold)?;
            let expected = expected.unwrap_or(p0);
            let z = if stats.stderr > 0.0 {
                (stats.fraction_up - expected) / stats.stderr
            } else {
                0.0
            };
            let report = AnalysisReport::new(
                "born",
                json!({"threshold": threshold, "n": finals.len(), "p0": p0}),
                z.abs() <= 3.0,
            )
            .with_estimate(stats.fraction_up, Some(stats.stderr))
            .with_expected(expected)
            .with_z(z)
            .with_details(serde_json::to_value(&stats)?);
            push(reports, label, "born", report);
        }
        AnalysisConfig::Decay { observable, expected_rate, rel_tolerance } => {
            // scalar records carry no coherence; only the delta observable lands here
            debug_assert!(matches!(observable, DecayObservable::Delta));
            let (times, means, stderrs) =
                ensemble_mean_path(records, |&p: &f64| (p * (1.0 - p)).sqrt());
            let window = decay_fit_window(spec.gamma, &times, &means, &stderrs);
            let fit = fit_exponential_decay(&times, &means, window)?;
            let expected = expected_rate.unwrap_or(spec.gamma / 8.0);
            let rel = (fit.rate - expected).abs() / expected;
            let report = AnalysisReport::new(
                "decay",
                json!({"observable": "delta", "gamma": spec.gamma, "window": window, "n": records.len()}),
                rel <= *rel_tolerance,
            )
            .with_estimate(fit.rate, None)
            .with_expected(expected)
            .with_details(serde_json::to_value(&fit)?);
            push(reports, label, "decay_delta", report);
        }
        AnalysisConfig::Jumps { theta } => {
            let mut assignments = Vec::new();
            let mut events = Vec::new();
            for rec in records {
                let (a, e) = extract_jumps_scalar(&rec.times, &rec.states, *theta)?;
                assignments.push(a);
                events.push(e);
            }
            let emp = empirical_rates(&events, &assignments)?;
            let dwell = dwell_time_test(&assignments)?;
            // theoretical rates via the matrix thermal model with the same bath rates
            let sme = thermal_qubit_model(
                spec.lambda * (1.0 - spec.p_eq),
                spec.lambda * spec.p_eq,
                spec.gamma,
            )?;
            let tensor = liouvillian_from_model(&sme, false)?;
            let theory = theoretical_rates(&tensor, &sme.collapse_op)?;
            let mut within_ci = true;
            for i in 0..2 {
                for j in 0..2 {
                    if i != j {
                        let th = theory.rate(i, j);
                        if th < emp.ci_low[i][j] || th > emp.ci_high[i][j] {
                            within_ci = false;
                        }
                    }
                }
            }
            let pass = within_ci && dwell.pass;
            let report = AnalysisReport::new(
                "jumps",
                json!({"theta": theta, "gamma": spec.gamma, "lambda": spec.lambda, "p_eq": spec.p_eq}),
                pass,
            )
            .with_details(json!({
                "theoretical": theory,
                "empirical": emp,
                "dwell": dwell,
            }));
            push(reports, label, "jumps", report);
        }
        AnalysisConfig::Spikes { epsilon, delta } => {
            let mut all_events = Vec::new();
            let mut total_time = 0.0;
            for rec in records {
                all_events.extend(detect_spikes_series(&rec.times, &rec.states, *epsilon, *delta)?);
                total_time += rec.final_time();
            }
            let heights: Vec<f64> = (0..8)
                .map(|i| 0.05 * (0.5f64 / 0.05).powf(i as f64 / 7.0))
                .collect();
            let survival = spike_survival(&all_events, &heights, total_time)?;
            let slope = survival_log_slope(&survival)?;
            let completion = jump_completion_probability(&all_events, Origin::FromZero)?;
            let comp_z = if completion.stderr > 0.0 {
                (completion.fraction - epsilon) / completion.stderr
            } else {
                0.0
            };
            let pass = (slope + 1.0).abs() <= 0.1 && comp_z.abs() <= 3.0;
            let report = AnalysisReport::new(
                "spikes",
                json!({"epsilon": epsilon, "delta": delta, "total_time": total_time}),
                pass,
            )
            .with_estimate(slope, None)
            .with_expected(-1.0)
            .with_details(json!({
                "survival": survival,
                "completion": completion,
                "completion_z": comp_z,
                "n_events": all_events.len(),
            }));
            push(reports, label, "spikes", report);
        }
        AnalysisConfig::Hmm { n, checkpoints } => {
            let checkpoints = if checkpoints.is_empty() {
                let lambda = spec.lambda.max(1e-9);
                vec![1.0 / lambda, 5.0 / lambda, 20.0 / lambda]
            } else {
                checkpoints.clone()
            };
            let report_data = filtered_law_equivalence(
                spec.lambda,
                spec.p_eq,
                spec.gamma,
                *n,
                config.grid.dt,
                &checkpoints,
                config.ensemble.master_seed ^ 0x9e3779b97f4a7c15,
                &[0.05, 0.1, 0.2, 0.4, 1.0],
            )?;
            let report = AnalysisReport::new(
                "hmm",
                json!({"n": n, "checkpoints": checkpoints, "dt": config.grid.dt}),
                report_data.pass,
            )
            .with_details(serde_json::to_value(&report_data)?);
            push(reports, label, "hmm", report);
        }
        AnalysisConfig::AveragedMe { .. } => {
            return Err(Error::Config {
                path: "analyses.averaged_me".into(),
                message: "needs a matrix (sme) model".into(),
            });
        }
    }
    Ok(())
}

fn run_pair_analysis(
    config: &ExperimentConfig,
    spec: &collapse_core::models::ScalarModelSpec,
    analysis: &AnalysisConfig,
    records: &[collapse_core::sde::TrajectoryRecord<QubitState>],
    label: &str,
    reports: &mut Vec<(String, AnalysisReport)>,
) -> Result<()> {
    let _ = config;
    match analysis {
        AnalysisConfig::Decay { observable: DecayObservable::Coherence, expected_rate, rel_tolerance } => {
            let (times, means, stderrs) = ensemble_mean_path(records, |q: &QubitState| q.u.re);
            let abs_means: Vec<f64> = means.iter().map(|m| m.abs()).collect();
            let window = decay_fit_window(spec.gamma, &times, &abs_means, &stderrs);
            let fit = fit_exponential_decay(&times, &abs_means, window)?;
            let expected = expected_rate.unwrap_or(spec.gamma / 8.0);
            let rel = (fit.rate - expected).abs() / expected;
            let report = AnalysisReport::new(
                "decay",
                json!({"observable": "coherence", "gamma": spec.gamma, "window": window, "n": records.len()}),
                rel <= *rel_tolerance,
            )
            .with_estimate(fit.rate, None)
            .with_expected(expected)
            .with_details(serde_json::to_value(&fit)?);
            push(reports, label, "decay_coherence", report);
        }
        _ => {
            return Err(Error::Config {
                path: "analyses".into(),
                message: "only the coherence decay analysis runs on (p, u) ensembles".into(),
            })
        }
    }
    Ok(())
}

fn run_sme_analysis(
    config: &ExperimentConfig,
    spec: &collapse_core::models::ModelSpec,
    analysis: &AnalysisConfig,
    records: &[collapse_core::sde::TrajectoryRecord<collapse_core::quantum::DensityMatrix>],
    rho0: &collapse_core::quantum::DensityMatrix,
    label: &str,
    reports: &mut Vec<(String, AnalysisReport)>,
) -> Result<()> {
    match analysis {
        AnalysisConfig::Jumps { theta } => {
            let mut assignments = Vec::new();
            let mut events = Vec::new();
            for rec in records {
                let (a, e) = extract_jumps(rec, &spec.collapse_op, *theta)?;
                assignments.push(a);
                events.push(e);
            }
            let emp = empirical_rates(&events, &assignments)?;
            let dwell = dwell_time_test(&assignments);
            let tensor = liouvillian_from_model(spec, false)?;
            let theory = theoretical_rates(&tensor, &spec.collapse_op)?;
            let mut within_ci = true;
            for i in 0..spec.dim {
                for j in 0..spec.dim {
                    if i != j && theory.rate(i, j) > 0.0 {
                        let th = theory.rate(i, j);
                        if th < emp.ci_low[i][j] || th > emp.ci_high[i][j] {
                            within_ci = false;
                        }
                    }
                }
            }
            let dwell_pass = dwell.as_ref().map(|d| d.pass).unwrap_or(false);
            let report = AnalysisReport::new(
                "jumps",
                json!({"theta": theta, "gamma": spec.collapse_rate}),
                within_ci && dwell_pass,
            )
            .with_details(json!({
                "theoretical": theory,
                "empirical": emp,
                "dwell": dwell.ok(),
            }));
            push(reports, label, "jumps", report);
        }
        AnalysisConfig::AveragedMe { t } => {
            let me_dt = (0.05 / spec.total_rate().max(1e-9)).min(config.grid.dt);
            let reference = averaged_me_evolve(spec, rho0, *t, me_dt)?;
            let idx = records[0].index_at(*t);
            let d = spec.dim;
            let mut max_z: f64 = 0.0;
            for i in 0..d {
                for j in 0..d {
                    for part in 0..2 {
                        let samples: Vec<f64> = records
                            .iter()
                            .map(|r| {
                                let z = r.states[idx].matrix()[(i, j)];
                                if part == 0 {
                                    z.re
                                } else {
                                    z.im
                                }
                            })
                            .collect();
                        let (m, se) = collapse_core::stats::mean_stderr(&samples);
                        let z_ref = reference.matrix()[(i, j)];
                        let target = if part == 0 { z_ref.re } else { z_ref.im };
                        let z = (m - target).abs() / se.max(1e-12);
                        max_z = max_z.max(z);
                    }
                }
            }
            let report = AnalysisReport::new(
                "averaged_me",
                json!({"t": t, "n": records.len(), "scheme": config.scheme}),
                max_z <= 3.0,
            )
            .with_estimate(max_z, None)
            .with_details(json!({"max_z_entrywise": max_z}));
            push(reports, label, "averaged_me", report);
        }
        _ => {
            return Err(Error::Config {
                path: "analyses".into(),
                message: "analysis not applicable to a matrix model".into(),
            })
        }
    }
    Ok(())
}
