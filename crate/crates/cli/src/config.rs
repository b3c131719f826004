//! Experiment configuration: JSON schema, preset resolution, validation.

use std::path::PathBuf;

use collapse_core::error::{Error, Result};
use collapse_core::linalg::matrix_from_json;
use collapse_core::models::{
    coherent_qubit_model, thermal_qubit_model, transmon_preset, ModelSpec, ModelSpecJson,
    ScalarModelSpec, ScalarVariant, PRESET_NAMES,
};
use collapse_core::quantum::{DensityMatrix, QubitState};
use collapse_core::sde::Scheme;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelConfig {
    Preset {
        preset: String,
        #[serde(default)]
        params: serde_json::Map<String, serde_json::Value>,
    },
    Scalar { scalar: ScalarModelSpec },
    Sme { sme: ModelSpecJson },
    File { file: PathBuf },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InitialConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_re: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_im: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<Vec<[f64; 2]>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Dotted path into the config, e.g. "model.params.gamma".
    pub path: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalysisConfig {
    /// Fraction of trajectories collapsing to p = 1 vs the initial p.
    Born {
        #[serde(default = "default_born_threshold")]
        threshold: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        expected: Option<f64>,
    },
    /// Exponential decay rate of E[sqrt(p(1-p))] or |E[u]| under pure collapse.
    Decay {
        observable: DecayObservable,
        #[serde(skip_serializing_if = "Option::is_none")]
        expected_rate: Option<f64>,
        #[serde(default = "default_rel_tol")]
        rel_tolerance: f64,
    },
    /// Empirical jump rates vs the theoretical rate matrix, plus dwell times.
    Jumps {
        #[serde(default = "default_theta")]
        theta: f64,
    },
    /// Spike excursion statistics: survival power law and completion test.
    Spikes {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default = "default_delta")]
        delta: f64,
    },
    /// Filtered-law equivalence of the hidden-Markov counterpart.
    Hmm {
        n: usize,
        #[serde(default)]
        checkpoints: Vec<f64>,
    },
    /// Ensemble mean vs deterministic averaged master equation at time t.
    AveragedMe { t: f64 },
}

fn default_born_threshold() -> f64 {
    0.99
}
fn default_rel_tol() -> f64 {
    0.05
}
fn default_theta() -> f64 {
    0.25
}
fn default_epsilon() -> f64 {
    0.02
}
fn default_delta() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayObservable {
    Delta,
    Coherence,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    pub grid: GridConfig,
    pub ensemble: EnsembleConfig,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub write_trajectories: bool,
    #[serde(default)]
    pub analyses: Vec<AnalysisConfig>,
    pub output_dir: PathBuf,
}

fn default_scheme() -> Scheme {
    Scheme::Euler
}

/// Concrete model after preset resolution.
pub enum ResolvedModel {
    Scalar(ScalarModelSpec),
    Sme(ModelSpec),
}

impl ResolvedModel {
    pub fn gamma(&self) -> f64 {
        match self {
            ResolvedModel::Scalar(s) => s.gamma,
            ResolvedModel::Sme(m) => m.collapse_rate,
        }
    }

    pub fn description(&self) -> serde_json::Value {
        match self {
            ResolvedModel::Scalar(s) => serde_json::json!({
                "kind": "scalar", "variant": s.variant, "lambda": s.lambda,
                "p_eq": s.p_eq, "gamma": s.gamma,
            }),
            ResolvedModel::Sme(m) => {
                serde_json::to_value(m.to_json()).expect("model serializes")
            }
        }
    }
}

fn param_f64(
    params: &serde_json::Map<String, serde_json::Value>,
    key: &str,
    default: f64,
) -> Result<f64> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v.as_f64().ok_or_else(|| Error::Config {
            path: format!("model.params.{key}"),
            message: "must be a number".into(),
        }),
    }
}

pub fn resolve_model(config: &ModelConfig) -> Result<ResolvedModel> {
    match config {
        ModelConfig::Scalar { scalar } => {
            scalar.validate()?;
            Ok(ResolvedModel::Scalar(*scalar))
        }
        ModelConfig::Sme { sme } => Ok(ResolvedModel::Sme(ModelSpec::from_json(sme)?)),
        ModelConfig::File { file } => {
            let text = std::fs::read_to_string(file)?;
            let json: ModelSpecJson = serde_json::from_str(&text)?;
            Ok(ResolvedModel::Sme(ModelSpec::from_json(&json)?))
        }
        ModelConfig::Preset { preset, params } => match preset.as_str() {
            "pure_collapse" => Ok(ResolvedModel::Scalar(ScalarModelSpec::pure_collapse(
                param_f64(params, "gamma", 1.0)?,
            )?)),
            "wright_fisher" => Ok(ResolvedModel::Scalar(ScalarModelSpec::wright_fisher(
                param_f64(params, "gamma", 1.0)?,
            )?)),
            "thermal" => {
                let form = params.get("form").and_then(|v| v.as_str()).unwrap_or("scalar");
                let gamma = param_f64(params, "gamma", 400.0)?;
                match form {
                    "scalar" => Ok(ResolvedModel::Scalar(ScalarModelSpec::collapse_thermal(
                        param_f64(params, "lambda", 1.0)?,
                        param_f64(params, "p_eq", 0.5)?,
                        gamma,
                    )?)),
                    "sme" => {
                        let lambda = param_f64(params, "lambda", 1.0)?;
                        let p_eq = param_f64(params, "p_eq", 0.5)?;
                        Ok(ResolvedModel::Sme(thermal_qubit_model(
                            lambda * (1.0 - p_eq),
                            lambda * p_eq,
                            gamma,
                        )?))
                    }
                    other => Err(Error::Config {
                        path: "model.params.form".into(),
                        message: format!("unknown form '{other}' (scalar|sme)"),
                    }),
                }
            }
            "coherent" => Ok(ResolvedModel::Sme(coherent_qubit_model(
                param_f64(params, "omega", 1.0)?,
                param_f64(params, "gamma", 4.0)?,
            )?)),
            "transmon" => Ok(ResolvedModel::Sme(transmon_preset())),
            other => Err(Error::UnknownPreset(other.to_string())),
        },
    }
}

/// Initial scalar population (default 0.5).
pub fn resolve_initial_p(initial: &InitialConfig) -> f64 {
    initial.p.unwrap_or(0.5)
}

/// Initial density matrix for a matrix model.
pub fn resolve_initial_density(initial: &InitialConfig, dim: usize) -> Result<DensityMatrix> {
    if let Some(rho) = &initial.rho {
        return DensityMatrix::new(matrix_from_json(rho)?);
    }
    if dim != 2 {
        return Ok(DensityMatrix::maximally_mixed(dim));
    }
    let p = initial.p.unwrap_or(0.5);
    let u = Complex64::new(initial.u_re.unwrap_or(0.0), initial.u_im.unwrap_or(0.0));
    Ok(collapse_core::quantum::to_density(&QubitState::new(p, u)?))
}

/// Human-readable description of a preset for `describe`.
pub fn describe_preset(name: &str) -> Result<String> {
    let text = match name {
        "pure_collapse" => "\
pure_collapse (scalar)
  dp = sqrt(gamma) p(1-p) dW
  Collapse without competing dynamics: p drifts to 0 or 1 with the
  population as the hitting probability.
  params: gamma (default 1).",
        "thermal" => "\
thermal (scalar by default, form=sme for the matrix version)
  dp = lambda (p_eq - p) dt + sqrt(gamma) p(1-p) dW
  Bath relaxation at rate lambda toward p_eq competing with collapse;
  in the fast-collapse limit p telegraphs between 0 and 1, leaving p=1
  at rate lambda (1-p_eq) and returning at rate lambda p_eq.
  params: lambda (1), p_eq (0.5), gamma (400), form (scalar).",
        "coherent" => "\
coherent (matrix)
  H = (omega/2) sigma_y against collapse of sigma_z/2: Rabi rotation vs
  measurement pinning. Jump rates are Zeno suppressed: omega^2/gamma per
  direction.
  params: omega (1), gamma (4).",
        "transmon" => "\
transmon (matrix, time unit = microseconds)
  Monitored transmon qubit: Omega = 2*pi/5.2 (population period 5.2 us),
  Gamma_1 = (765.3 us)^-1, Gamma_phi = (17.9 us)^-1, Gamma_d = (0.9 us)^-1,
  readout of sigma_z with collapse rate Gamma_d/2 and efficiency 0.34.
  params: none.",
        "wright_fisher" => "\
wright_fisher (scalar)
  dp = sqrt(gamma p(1-p)) dW
  Same driftless diffusion but with a square root on the variance: the
  boundary is reached almost surely in finite time and absorbs.
  params: gamma (default 1).",
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    Ok(text.to_string())
}

/// Apply a dotted-path override like `grid.dt=1e-3` onto raw config JSON.
pub fn apply_override(config: &mut serde_json::Value, path: &str, raw_value: &str) -> Result<()> {
    let value: serde_json::Value = serde_json::from_str(raw_value)
        .unwrap_or_else(|_| serde_json::Value::String(raw_value.to_string()));
    let mut cursor = config;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if i + 1 == parts.len() {
            match cursor {
                serde_json::Value::Object(map) => {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                _ => {
                    return Err(Error::Config {
                        path: path.into(),
                        message: "parent is not an object".into(),
                    })
                }
            }
        }
        cursor = match cursor {
            serde_json::Value::Object(map) => {
                map.entry(part.to_string()).or_insert_with(|| serde_json::json!({}))
            }
            _ => {
                return Err(Error::Config {
                    path: path.into(),
                    message: format!("segment '{part}' is not an object"),
                })
            }
        };
    }
    Ok(())
}

pub struct Validation {
    pub warnings: Vec<String>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<Validation> {
        let mut warnings = Vec::new();
        if !(self.grid.dt > 0.0) {
            return Err(Error::Config { path: "grid.dt".into(), message: "must be positive".into() });
        }
        if !(self.grid.t_final > 0.0) {
            return Err(Error::Config {
                path: "grid.t_final".into(),
                message: "must be positive".into(),
            });
        }
        if self.grid.record_stride < 1 {
            return Err(Error::Config {
                path: "grid.record_stride".into(),
                message: "must be >= 1".into(),
            });
        }
        if self.ensemble.n_traj < 1 {
            return Err(Error::Config {
                path: "ensemble.n_traj".into(),
                message: "must be >= 1".into(),
            });
        }
        let model = resolve_model(&self.model).map_err(|e| match e {
            Error::UnknownPreset(p) => Error::Config {
                path: "model.preset".into(),
                message: format!("unknown preset '{p}'"),
            },
            other => other,
        })?;
        let gammas: Vec<f64> = match &self.sweep {
            Some(s) if s.path.ends_with("gamma") => s.values.clone(),
            _ => vec![model.gamma()],
        };
        for &gamma in &gammas {
            let product = self.grid.dt * gamma;
            if product > 0.5 {
                warnings.push(format!(
                    "grid.dt * gamma = {product:.3} > 0.5: the collapse timescale is under-resolved"
                ));
            }
            for analysis in &self.analyses {
                if let AnalysisConfig::Spikes { epsilon, delta } = analysis {
                    if product > 0.05 {
                        return Err(Error::Config {
                            path: "grid.dt".into(),
                            message: format!(
                                "spike analysis requires dt * gamma <= 0.05 (got {product:.3})"
                            ),
                        });
                    }
                    if !collapse_core::analysis::spikes::resolution_ok(
                        gamma,
                        self.grid.dt,
                        *epsilon,
                        *delta,
                    ) {
                        warnings.push(format!(
                            "step noise at epsilon={epsilon} exceeds delta={delta}: crossings may be skipped"
                        ));
                    }
                }
            }
        }
        let needs_full_resolution = self
            .analyses
            .iter()
            .any(|a| matches!(a, AnalysisConfig::Spikes { .. } | AnalysisConfig::Jumps { .. }));
        if needs_full_resolution && self.grid.record_stride != 1 {
            return Err(Error::Config {
                path: "grid.record_stride".into(),
                message: "spike/jump analyses need record_stride = 1".into(),
            });
        }
        for analysis in &self.analyses {
            match analysis {
                AnalysisConfig::Born { threshold, .. } => {
                    if !(0.5..1.0).contains(threshold) {
                        return Err(Error::Config {
                            path: "analyses.born.threshold".into(),
                            message: "must be in (0.5, 1)".into(),
                        });
                    }
                    if !matches!(
                        &model,
                        ResolvedModel::Scalar(s) if s.variant == ScalarVariant::PureCollapse
                            || (s.variant == ScalarVariant::CollapseThermal && s.lambda == 0.0)
                    ) {
                        return Err(Error::Config {
                            path: "analyses.born".into(),
                            message: "needs the scalar pure_collapse model".into(),
                        });
                    }
                }
                AnalysisConfig::Decay { .. } => {
                    if !matches!(&model, ResolvedModel::Scalar(s) if s.variant == ScalarVariant::PureCollapse)
                    {
                        return Err(Error::Config {
                            path: "analyses.decay".into(),
                            message: "needs the scalar pure_collapse model".into(),
                        });
                    }
                }
                AnalysisConfig::Jumps { theta } => {
                    if !(*theta > 0.0 && *theta < 0.5) {
                        return Err(Error::Config {
                            path: "analyses.jumps.theta".into(),
                            message: "must be in (0, 0.5)".into(),
                        });
                    }
                }
                AnalysisConfig::Spikes { epsilon, delta } => {
                    if !(0.0 < *delta && delta < epsilon && *epsilon < 0.5) {
                        return Err(Error::Config {
                            path: "analyses.spikes".into(),
                            message: "need 0 < delta < epsilon < 0.5".into(),
                        });
                    }
                    if !matches!(&model, ResolvedModel::Scalar(_)) {
                        return Err(Error::Config {
                            path: "analyses.spikes".into(),
                            message: "spike analysis runs on scalar models".into(),
                        });
                    }
                }
                AnalysisConfig::Hmm { n, .. } => {
                    if *n < 1000 {
                        return Err(Error::Config {
                            path: "analyses.hmm.n".into(),
                            message: "needs n >= 1000".into(),
                        });
                    }
                    if !matches!(&model, ResolvedModel::Scalar(s) if s.variant == ScalarVariant::CollapseThermal)
                    {
                        return Err(Error::Config {
                            path: "analyses.hmm".into(),
                            message: "needs the scalar thermal model".into(),
                        });
                    }
                }
                AnalysisConfig::AveragedMe { t } => {
                    if !(*t > 0.0 && *t <= self.grid.t_final) {
                        return Err(Error::Config {
                            path: "analyses.averaged_me.t".into(),
                            message: "t must be in (0, t_final]".into(),
                        });
                    }
                    if !matches!(&model, ResolvedModel::Sme(_)) {
                        return Err(Error::Config {
                            path: "analyses.averaged_me".into(),
                            message: "needs a matrix (sme) model".into(),
                        });
                    }
                }
            }
        }
        if matches!(&model, ResolvedModel::Scalar(s) if s.variant == ScalarVariant::WrightFisher)
            && self.scheme == Scheme::Kraus
        {
            warnings.push("wright_fisher is a scalar model; scheme setting is ignored".into());
        }
        Ok(Validation { warnings })
    }
}

pub fn preset_names() -> &'static [&'static str] {
    &PRESET_NAMES
}
