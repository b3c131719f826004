//! Model catalog: the scalar population equations, full qubit stochastic
//! master equations, named presets, and the deterministic averaged master
//! equation.
//!
//! Two independent code paths describe the same physics:
//!
//! * the scalar path integrates
//!   `dp = lambda (p_eq - p) dt + sqrt(gamma_s) p(1-p) dW` together with the
//!   coherence equation `du = -(gamma_s/8) u dt + (sqrt(gamma_s)/2)(2p-1) u dW`;
//! * the matrix path integrates
//!   `drho = L(rho) dt + gamma D[O](rho) dt + sqrt(eta gamma) H[O](rho) dW`.
//!
//! With `O = alpha sigma_z` the matrix equation gives the population noise
//! coefficient `4 alpha sqrt(gamma) p(1-p)`, so the two conventions coincide
//! when `gamma_s = 16 alpha^2 gamma`. That mapping is pinned here, in one
//! place, by [`SCALAR_RATE_PER_ALPHA_SQ_SME_RATE`] and the two conversion
//! helpers; a cross-check test drives both paths with the same noise.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    eigen_hermitian, lower_from_plus, matrix_from_json, matrix_to_json, raise_to_plus, sigma_y,
    sigma_z, ComplexMatrix,
};
use crate::quantum::{lindblad_dissipator, CollapseOperator, DensityMatrix};

/// `gamma_scalar = 16 alpha^2 gamma_sme` for collapse operator `alpha sigma_z`.
pub const SCALAR_RATE_PER_ALPHA_SQ_SME_RATE: f64 = 16.0;

/// Scalar-convention rate equivalent to an SME with `O = alpha sigma_z` at `gamma_sme`.
pub fn scalar_rate_from_sme(alpha: f64, gamma_sme: f64) -> f64 {
    SCALAR_RATE_PER_ALPHA_SQ_SME_RATE * alpha * alpha * gamma_sme
}

/// SME rate (for `O = alpha sigma_z`) equivalent to a scalar-convention rate.
pub fn sme_rate_from_scalar(alpha: f64, gamma_scalar: f64) -> f64 {
    gamma_scalar / (SCALAR_RATE_PER_ALPHA_SQ_SME_RATE * alpha * alpha)
}

// ---------------------------------------------------------------------------
// Scalar models
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarVariant {
    /// dp = lambda (p_eq - p) dt + sqrt(gamma) p(1-p) dW
    CollapseThermal,
    /// dp = sqrt(gamma) p(1-p) dW
    PureCollapse,
    /// dp = sqrt(gamma p(1-p)) dW  — reaches the boundary in finite time
    WrightFisher,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarModelSpec {
    pub variant: ScalarVariant,
    pub lambda: f64,
    pub p_eq: f64,
    pub gamma: f64,
}

impl ScalarModelSpec {
    pub fn collapse_thermal(lambda: f64, p_eq: f64, gamma: f64) -> Result<Self> {
        let spec = Self { variant: ScalarVariant::CollapseThermal, lambda, p_eq, gamma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn pure_collapse(gamma: f64) -> Result<Self> {
        let spec = Self { variant: ScalarVariant::PureCollapse, lambda: 0.0, p_eq: 0.5, gamma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn wright_fisher(gamma: f64) -> Result<Self> {
        let spec = Self { variant: ScalarVariant::WrightFisher, lambda: 0.0, p_eq: 0.5, gamma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidParameter { name: "lambda", message: "must be >= 0".into() });
        }
        if !(0.0..=1.0).contains(&self.p_eq) {
            return Err(Error::InvalidParameter { name: "p_eq", message: "must be in [0, 1]".into() });
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::InvalidParameter { name: "gamma", message: "must be >= 0".into() });
        }
        Ok(())
    }
}

/// Drift and diffusion of the scalar population equation at p.
pub fn scalar_drift_diffusion(spec: &ScalarModelSpec, p: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::PopulationOutOfRange { p });
    }
    let sq = p * (1.0 - p);
    Ok(match spec.variant {
        ScalarVariant::CollapseThermal => (spec.lambda * (spec.p_eq - p), spec.gamma.sqrt() * sq),
        ScalarVariant::PureCollapse => (0.0, spec.gamma.sqrt() * sq),
        ScalarVariant::WrightFisher => (0.0, (spec.gamma * sq).sqrt()),
    })
}

/// Drift and diffusion of the coherence under pure collapse (scalar convention):
/// `du = -(gamma/8) u dt + (sqrt(gamma)/2)(2p-1) u dW`.
pub fn phase_drift_diffusion(p: f64, u: Complex64, gamma: f64) -> (Complex64, Complex64) {
    let drift = u * (-gamma / 8.0);
    let diffusion = u * (gamma.sqrt() / 2.0 * (2.0 * p - 1.0));
    (drift, diffusion)
}

// ---------------------------------------------------------------------------
// Matrix (SME) models
// ---------------------------------------------------------------------------

/// Full stochastic-master-equation problem definition.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub dim: usize,
    pub hamiltonian: ComplexMatrix,
    pub channels: Vec<ComplexMatrix>,
    pub collapse_op: CollapseOperator,
    /// Collapse rate gamma >= 0.
    pub collapse_rate: f64,
    /// Measurement efficiency eta in (0, 1]; eta = 1 is the ideal equation.
    pub efficiency: f64,
}

impl ModelSpec {
    pub fn new(
        hamiltonian: ComplexMatrix,
        channels: Vec<ComplexMatrix>,
        collapse_op: CollapseOperator,
        collapse_rate: f64,
        efficiency: f64,
    ) -> Result<Self> {
        let dim = collapse_op.dim();
        if hamiltonian.dim() != dim {
            return Err(Error::DimensionMismatch { left: hamiltonian.dim(), right: dim });
        }
        for ch in &channels {
            if ch.dim() != dim {
                return Err(Error::DimensionMismatch { left: ch.dim(), right: dim });
            }
        }
        if !(collapse_rate >= 0.0) {
            return Err(Error::InvalidParameter { name: "collapse_rate", message: "must be >= 0".into() });
        }
        if !(efficiency > 0.0 && efficiency <= 1.0) {
            return Err(Error::InvalidParameter { name: "efficiency", message: "must be in (0, 1]".into() });
        }
        Ok(Self { dim, hamiltonian, channels, collapse_op, collapse_rate, efficiency })
    }

    /// `L(rho) = -i[H, rho] + sum_j D[L_j](rho)` — system part, no collapse.
    pub fn lindblad_part(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        let mut out = self
            .hamiltonian
            .commutator(rho)
            .scale(Complex64::new(0.0, -1.0));
        for ch in &self.channels {
            out = out.add(&lindblad_dissipator(ch, rho)?);
        }
        Ok(out)
    }

    /// `L(rho) + gamma D[O](rho)` — the full deterministic drift of the SME.
    pub fn deterministic_drift(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        let collapse = lindblad_dissipator(self.collapse_op.matrix(), rho)?;
        Ok(self.lindblad_part(rho)?.add(&collapse.scale_re(self.collapse_rate)))
    }

    /// `gamma + sum_j lambda_max(L_j† L_j)`: fastest incoherent rate.
    pub fn total_rate(&self) -> f64 {
        let mut total = self.collapse_rate;
        for ch in &self.channels {
            let g = ch.adjoint().matmul(ch);
            if let Ok(e) = eigen_hermitian(&g) {
                total += e.values.last().copied().unwrap_or(0.0);
            }
        }
        total
    }
}

/// Qubit relaxing in a thermal bath while its population is collapsed.
///
/// `lambda_up` is the excitation rate out of the monitored state |+>_z
/// (basis index 0) and `lambda_down` the decay rate back into it, so the
/// averaged population obeys
/// `dp/dt = -lambda_up p + lambda_down (1 - p)` with equilibrium
/// `p_eq = lambda_down / (lambda_up + lambda_down)`. Diagonal density
/// matrices stay diagonal.
pub fn thermal_qubit_model(lambda_up: f64, lambda_down: f64, gamma: f64) -> Result<ModelSpec> {
    if lambda_up < 0.0 || lambda_down < 0.0 {
        return Err(Error::InvalidParameter { name: "lambda", message: "rates must be >= 0".into() });
    }
    let channels = vec![
        lower_from_plus().scale_re(lambda_up.sqrt()),
        raise_to_plus().scale_re(lambda_down.sqrt()),
    ];
    ModelSpec::new(
        ComplexMatrix::zeros(2),
        channels,
        CollapseOperator::new(sigma_z().scale_re(0.5))?,
        gamma,
        1.0,
    )
}

/// Qubit driven around sigma_y while sigma_z/2 is collapsed:
/// `H = (omega/2) sigma_y`, so without collapse `p_t = cos^2(omega t / 2)`.
/// Real density matrices stay real.
pub fn coherent_qubit_model(omega: f64, gamma: f64) -> Result<ModelSpec> {
    ModelSpec::new(
        sigma_y().scale_re(omega / 2.0),
        Vec::new(),
        CollapseOperator::new(sigma_z().scale_re(0.5))?,
        gamma,
        1.0,
    )
}

/// Pure collapse of sigma_z/2 with no other dynamics.
pub fn pure_collapse_qubit_model(gamma: f64) -> Result<ModelSpec> {
    ModelSpec::new(
        ComplexMatrix::zeros(2),
        Vec::new(),
        CollapseOperator::new(sigma_z().scale_re(0.5))?,
        gamma,
        1.0,
    )
}

/// Continuously monitored transmon qubit (time unit: microseconds).
///
/// Rabi drive `(Omega/2) sigma_y` with `Omega = 2 pi / 5.2` (population
/// period 5.2 us), relaxation `Gamma_1 = 1/765.3`, extra dephasing
/// `Gamma_phi = 1/17.9`, measurement dephasing `Gamma_d = 1/0.9`, and a
/// diffusive readout of sigma_z with efficiency 34%.
///
/// The measurement noise term enters the integrators as
/// `sqrt(eta gamma) H[sigma_z] dW` with `gamma = Gamma_d/2`, `eta = 0.34`;
/// the alternative reading that matches the amplitude
/// `sqrt(eta) (Gamma_d/2) H[sigma_z]` would be `gamma = (Gamma_d/2)^2` with
/// the same eta. Note the collapse term also contributes its own
/// `gamma D[sigma_z]` dephasing on top of the L_w channel.
pub fn transmon_preset() -> ModelSpec {
    let omega = 2.0 * std::f64::consts::PI / 5.2; // 1/us
    let gamma_1: f64 = 1.0 / 765.3;
    let gamma_phi: f64 = 1.0 / 17.9;
    let gamma_d: f64 = 1.0 / 0.9;
    let eta_d = 0.34;

    let decay = raise_to_plus(); // relaxation into the monitored state
    let channels = vec![
        decay.scale_re((gamma_1 / 2.0).sqrt()),
        decay.scale(Complex64::new(0.0, (gamma_1 / 2.0).sqrt())),
        sigma_z().scale_re((gamma_d / 2.0).sqrt()),
        sigma_z().scale_re((gamma_phi / 2.0).sqrt()),
    ];
    ModelSpec::new(
        sigma_y().scale_re(omega / 2.0),
        channels,
        CollapseOperator::new(sigma_z()).expect("sigma_z is non-degenerate"),
        gamma_d / 2.0,
        eta_d,
    )
    .expect("transmon preset parameters are valid")
}

// ---------------------------------------------------------------------------
// Averaged master equation
// ---------------------------------------------------------------------------

/// Deterministic RK4 integration of `drho/dt = L(rho) + gamma D[O](rho)` from
/// 0 to `t`. Requires `dt * (gamma + sum of channel rates) <= 0.1`.
pub fn averaged_me_evolve(
    model: &ModelSpec,
    rho0: &DensityMatrix,
    t: f64,
    dt: f64,
) -> Result<DensityMatrix> {
    if rho0.dim() != model.dim {
        return Err(Error::DimensionMismatch { left: rho0.dim(), right: model.dim });
    }
    if !(dt > 0.0) || !(t >= 0.0) {
        return Err(Error::InvalidParameter { name: "dt", message: "need dt > 0, t >= 0".into() });
    }
    let product = dt * model.total_rate();
    if product > 0.1 {
        return Err(Error::StepSizeTooLarge { product });
    }
    if t == 0.0 {
        return Ok(rho0.clone());
    }
    let n = (t / dt).ceil() as usize;
    let h = t / n as f64;
    let mut rho = rho0.matrix().clone();
    for _ in 0..n {
        let k1 = model.deterministic_drift(&rho)?;
        let k2 = model.deterministic_drift(&rho.add(&k1.scale_re(h / 2.0)))?;
        let k3 = model.deterministic_drift(&rho.add(&k2.scale_re(h / 2.0)))?;
        let k4 = model.deterministic_drift(&rho.add(&k3.scale_re(h)))?;
        let mut incr = k1;
        incr.add_assign_scaled(&k2, Complex64::new(2.0, 0.0));
        incr.add_assign_scaled(&k3, Complex64::new(2.0, 0.0));
        incr.add_assign_scaled(&k4, Complex64::new(1.0, 0.0));
        rho.add_assign_scaled(&incr.scale_re(h / 6.0), Complex64::new(1.0, 0.0));
    }
    let tr_dev = (rho.trace() - Complex64::new(1.0, 0.0)).norm();
    if tr_dev > 1e-10 {
        return Err(Error::TraceNotOne { deviation: tr_dev, tolerance: 1e-10 });
    }
    DensityMatrix::hermitian_unit_trace(rho)
}

// ---------------------------------------------------------------------------
// Preset registry and model JSON format
// ---------------------------------------------------------------------------

pub const PRESET_NAMES: [&str; 5] =
    ["pure_collapse", "thermal", "coherent", "transmon", "wright_fisher"];

/// JSON form of a matrix model: {dim, H, channels, O, gamma, eta}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpecJson {
    pub dim: usize,
    #[serde(rename = "H")]
    pub hamiltonian: Vec<Vec<[f64; 2]>>,
    pub channels: Vec<Vec<Vec<[f64; 2]>>>,
    #[serde(rename = "O")]
    pub collapse_op: Vec<Vec<[f64; 2]>>,
    pub gamma: f64,
    pub eta: f64,
}

impl ModelSpec {
    pub fn to_json(&self) -> ModelSpecJson {
        ModelSpecJson {
            dim: self.dim,
            hamiltonian: matrix_to_json(&self.hamiltonian),
            channels: self.channels.iter().map(matrix_to_json).collect(),
            collapse_op: matrix_to_json(self.collapse_op.matrix()),
            gamma: self.collapse_rate,
            eta: self.efficiency,
        }
    }

    pub fn from_json(json: &ModelSpecJson) -> Result<Self> {
        let h = matrix_from_json(&json.hamiltonian)?;
        let channels: Result<Vec<_>> = json.channels.iter().map(|c| matrix_from_json(c)).collect();
        let op = CollapseOperator::new(matrix_from_json(&json.collapse_op)?)?;
        let spec = Self::new(h, channels?, op, json.gamma, json.eta)?;
        if spec.dim != json.dim {
            return Err(Error::DimensionMismatch { left: spec.dim, right: json.dim });
        }
        Ok(spec)
    }
}
