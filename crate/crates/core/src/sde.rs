//! Ito time-stepping engines with a reproducible randomness contract.
//!
//! Determinism contract: a trajectory is a pure function of
//! `(model, initial state, grid, randomness spec, scheme)`. Ensembles assign
//! trajectory `i` the stream `RandomnessSpec(master_seed, i)` and may run in
//! parallel; scheduling cannot affect results because no state is shared.
//!
//! Two matrix schemes are provided:
//!
//! * `Euler`: the naive discretization. Each step is re-Hermitized and
//!   trace-renormalized; positivity violations are detected and counted but
//!   never repaired.
//! * `Kraus`: a positivity-preserving one-step map
//!   `rho' = (M rho M† + sum_j L_j rho L_j† dt + (1-eta) gamma O rho O† dt)/tr`
//!   with `M = I + (-iH - 1/2 sum L_j†L_j - 1/2 gamma O†O) dt + sqrt(eta gamma) O dY`
//!   and `dY = sqrt(eta gamma) tr[(O+O†) rho] dt + dW`, which agrees with
//!   Euler to O(dt^2) per step.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    matmul_bdagger_acc, matmul_into, min_eigenvalue_hermitian, trace_product, ComplexMatrix,
};
use crate::models::{scalar_drift_diffusion, ModelSpec, ScalarModelSpec, ScalarVariant};
use crate::quantum::{DensityMatrix, QubitState, POSITIVITY_TOL};
use crate::rng::{gaussian_increment, RandomnessSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    Kraus,
}

/// Uniform time grid. States are recorded at step 0, every `record_stride`
/// steps, and at the final step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dt: f64,
    pub n_steps: usize,
    pub record_stride: usize,
}

impl GridSpec {
    pub fn new(dt: f64, n_steps: usize, record_stride: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter { name: "dt", message: "must be positive".into() });
        }
        if n_steps < 1 {
            return Err(Error::InvalidParameter { name: "n_steps", message: "must be >= 1".into() });
        }
        if record_stride < 1 {
            return Err(Error::InvalidParameter {
                name: "record_stride",
                message: "must be >= 1".into(),
            });
        }
        Ok(Self { dt, n_steps, record_stride })
    }

    /// Grid reaching (approximately) `t_final`.
    pub fn from_horizon(dt: f64, t_final: f64, record_stride: usize) -> Result<Self> {
        if !(t_final > 0.0) {
            return Err(Error::InvalidParameter {
                name: "t_final",
                message: "must be positive".into(),
            });
        }
        let n = (t_final / dt).round().max(1.0) as usize;
        Self::new(dt, n, record_stride)
    }

    pub fn t_final(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn is_recorded(&self, step: usize) -> bool {
        step == 0 || step == self.n_steps || step % self.record_stride == 0
    }

    pub fn n_recorded(&self) -> usize {
        let mut n = self.n_steps / self.record_stride + 1;
        if self.n_steps % self.record_stride != 0 {
            n += 1;
        }
        n
    }
}

/// Per-run integrator diagnostics.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Scalar steps that left [0, 1] and were clamped back.
    pub clamp_events: u64,
    /// Checked states with min eigenvalue below the positivity tolerance.
    pub positivity_violations: u64,
    /// Smallest eigenvalue seen among checked states (matrix schemes).
    pub min_eigenvalue: f64,
    /// Boundary absorption time (Wright-Fisher sticky boundaries).
    pub absorbed_at: Option<f64>,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            clamp_events: 0,
            positivity_violations: 0,
            min_eigenvalue: f64::INFINITY,
            absorbed_at: None,
        }
    }
}

/// One stochastic run: grid, noise provenance, and the recorded states.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord<S> {
    pub grid: GridSpec,
    pub randomness: RandomnessSpec,
    pub scheme: Scheme,
    pub times: Vec<f64>,
    pub states: Vec<S>,
    pub diagnostics: Diagnostics,
}

impl<S> TrajectoryRecord<S> {
    pub fn final_state(&self) -> &S {
        self.states.last().expect("record never empty")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("record never empty")
    }

    /// Index of the recorded sample closest to time t.
    pub fn index_at(&self, t: f64) -> usize {
        match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => i,
            Err(i) => {
                if i == 0 {
                    0
                } else if i >= self.times.len() {
                    self.times.len() - 1
                } else if (self.times[i] - t).abs() < (t - self.times[i - 1]).abs() {
                    i
                } else {
                    i - 1
                }
            }
        }
    }

    pub fn check_invariants(&self) -> Result<()> {
        if self.times.len() != self.states.len() || self.times.is_empty() {
            return Err(Error::InvalidParameter {
                name: "record",
                message: "times/states length mismatch".into(),
            });
        }
        if self.times[0] != 0.0 {
            return Err(Error::InvalidParameter {
                name: "record",
                message: "times must start at 0".into(),
            });
        }
        for w in self.times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidParameter {
                    name: "record",
                    message: "times must be strictly increasing".into(),
                });
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Scalar stepping
// ---------------------------------------------------------------------------

/// Boundary handling for the scalar engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClampPolicy {
    /// Clamp to [0, 1] and count the event (collapse-type diffusion).
    Clamp,
    /// Absorb exactly at the boundary and stay there (Wright-Fisher).
    AbsorbSticky,
    /// Leave the raw Euler value (boundary-contrast diagnostics only).
    NoClamp,
}

pub fn default_clamp_policy(variant: ScalarVariant) -> ClampPolicy {
    match variant {
        ScalarVariant::WrightFisher => ClampPolicy::AbsorbSticky,
        _ => ClampPolicy::Clamp,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScalarStep {
    pub value: f64,
    pub clamped: bool,
}

/// One Euler step `p + drift dt + diffusion dW`, clamped to [0, 1].
pub fn euler_step_scalar(p: f64, drift: f64, diffusion: f64, dt: f64, dw: f64) -> Result<ScalarStep> {
    if ![p, drift, diffusion, dt, dw].iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite { context: "euler_step_scalar" });
    }
    let raw = p + drift * dt + diffusion * dw;
    let value = raw.clamp(0.0, 1.0);
    Ok(ScalarStep { value, clamped: value != raw })
}

/// Core scalar loop; calls `observer(step_index, t, p)` for every step
/// including step 0.
pub fn run_scalar_with(
    spec: &ScalarModelSpec,
    p0: f64,
    grid: &GridSpec,
    randomness: &RandomnessSpec,
    policy: ClampPolicy,
    mut observer: impl FnMut(usize, f64, f64),
) -> Result<Diagnostics> {
    spec.validate()?;
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::PopulationOutOfRange { p: p0 });
    }
    let mut diag = Diagnostics::default();
    let mut p = p0;
    observer(0, 0.0, p);
    for step in 0..grid.n_steps {
        let t_next = (step + 1) as f64 * grid.dt;
        if diag.absorbed_at.is_some() {
            observer(step + 1, t_next, p);
            continue;
        }
        let dw = gaussian_increment(randomness, step as u64, grid.dt);
        let (drift, diffusion) = scalar_drift_diffusion(spec, p.clamp(0.0, 1.0))?;
        let raw = p + drift * grid.dt + diffusion * dw;
        p = match policy {
            ClampPolicy::Clamp => {
                let clamped = raw.clamp(0.0, 1.0);
                if clamped != raw {
                    diag.clamp_events += 1;
                }
                clamped
            }
            ClampPolicy::AbsorbSticky => {
                if raw <= 0.0 {
                    diag.absorbed_at = Some(t_next);
                    0.0
                } else if raw >= 1.0 {
                    diag.absorbed_at = Some(t_next);
                    1.0
                } else {
                    raw
                }
            }
            ClampPolicy::NoClamp => raw,
        };
        if !p.is_finite() {
            return Err(Error::StepFailed {
                step,
                source: Box::new(Error::NonFinite { context: "scalar state" }),
            });
        }
        observer(step + 1, t_next, p);
    }
    Ok(diag)
}

/// Record a scalar trajectory with the variant's default boundary policy.
pub fn simulate_scalar(
    spec: &ScalarModelSpec,
    p0: f64,
    grid: &GridSpec,
    randomness: &RandomnessSpec,
) -> Result<TrajectoryRecord<f64>> {
    simulate_scalar_with_policy(spec, p0, grid, randomness, default_clamp_policy(spec.variant))
}

pub fn simulate_scalar_with_policy(
    spec: &ScalarModelSpec,
    p0: f64,
    grid: &GridSpec,
    randomness: &RandomnessSpec,
    policy: ClampPolicy,
) -> Result<TrajectoryRecord<f64>> {
    let mut times = Vec::with_capacity(grid.n_recorded());
    let mut states = Vec::with_capacity(grid.n_recorded());
    let diagnostics = run_scalar_with(spec, p0, grid, randomness, policy, |step, t, p| {
        if grid.is_recorded(step) {
            times.push(t);
            states.push(p);
        }
    })?;
    Ok(TrajectoryRecord { grid: *grid, randomness: *randomness, scheme: Scheme::Euler, times, states, diagnostics })
}

/// Population + coherence pair under pure collapse (scalar convention),
/// driven by a single Wiener process:
///
/// ```text
/// dp = sqrt(gamma) p(1-p) dW
/// du = -(gamma/8) u dt + (sqrt(gamma)/2)(2p-1) u dW
/// ```
pub fn simulate_phase_pair(
    gamma: f64,
    initial: QubitState,
    grid: &GridSpec,
    randomness: &RandomnessSpec,
) -> Result<TrajectoryRecord<QubitState>> {
    let spec = ScalarModelSpec::pure_collapse(gamma)?;
    let mut diag = Diagnostics::default();
    let mut times = Vec::with_capacity(grid.n_recorded());
    let mut states = Vec::with_capacity(grid.n_recorded());
    let mut p = initial.p;
    let mut u = initial.u;
    times.push(0.0);
    states.push(initial);
    for step in 0..grid.n_steps {
        let dw = gaussian_increment(randomness, step as u64, grid.dt);
        let (drift_p, diff_p) = scalar_drift_diffusion(&spec, p)?;
        let (drift_u, diff_u) = crate::models::phase_drift_diffusion(p, u, gamma);
        let raw = p + drift_p * grid.dt + diff_p * dw;
        let clamped = raw.clamp(0.0, 1.0);
        if clamped != raw {
            diag.clamp_events += 1;
        }
        p = clamped;
        u += drift_u * grid.dt + diff_u * dw;
        if !u.re.is_finite() || !u.im.is_finite() {
            return Err(Error::StepFailed {
                step,
                source: Box::new(Error::NonFinite { context: "coherence" }),
            });
        }
        if grid.is_recorded(step + 1) {
            times.push((step + 1) as f64 * grid.dt);
            states.push(QubitState { p, u });
        }
    }
    Ok(TrajectoryRecord { grid: *grid, randomness: *randomness, scheme: Scheme::Euler, times, states, diagnostics: diag })
}

// ---------------------------------------------------------------------------
// Matrix (SME) stepping
// ---------------------------------------------------------------------------

/// Precomputed operators and scratch space for one (model, dt, scheme) run.
pub struct SmeIntegrator {
    scheme: Scheme,
    dt: f64,
    /// -iH - 1/2 (sum_j L_j†L_j + gamma O†O)
    drift_core: ComplexMatrix,
    /// I + drift_core * dt (Kraus M without the measurement term)
    m_base: ComplexMatrix,
    /// O + O†
    o_sym: ComplexMatrix,
    o: ComplexMatrix,
    /// sqrt(eta gamma)
    noise_coeff: f64,
    /// (operator, weight) pairs entering as K rho K† dt in the Euler drift
    euler_sandwich: Vec<(ComplexMatrix, f64)>,
    /// operators entering as K rho K† in the Kraus sum (dt already folded in)
    kraus_sandwich: Vec<ComplexMatrix>,
    buf_a: ComplexMatrix,
    buf_m: ComplexMatrix,
    buf_out: ComplexMatrix,
}

impl SmeIntegrator {
    pub fn new(model: &ModelSpec, dt: f64, scheme: Scheme) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter { name: "dt", message: "must be positive".into() });
        }
        let d = model.dim;
        let gamma = model.collapse_rate;
        let eta = model.efficiency;
        let o = model.collapse_op.matrix().clone();
        let o_dag = o.adjoint();

        let mut damping = o_dag.matmul(&o).scale_re(gamma);
        for ch in &model.channels {
            damping = damping.add(&ch.adjoint().matmul(ch));
        }
        let drift_core = model
            .hamiltonian
            .scale(Complex64::new(0.0, -1.0))
            .sub(&damping.scale_re(0.5));
        let mut m_base = ComplexMatrix::identity(d);
        m_base.add_assign_scaled(&drift_core, Complex64::new(dt, 0.0));

        let mut euler_sandwich: Vec<(ComplexMatrix, f64)> =
            model.channels.iter().map(|ch| (ch.clone(), 1.0)).collect();
        euler_sandwich.push((o.clone(), gamma));

        let mut kraus_sandwich: Vec<ComplexMatrix> = model
            .channels
            .iter()
            .map(|ch| ch.scale_re(dt.sqrt()))
            .collect();
        if (1.0 - eta) * gamma > 0.0 {
            kraus_sandwich.push(o.scale_re(((1.0 - eta) * gamma * dt).sqrt()));
        }

        Ok(Self {
            scheme,
            dt,
            o_sym: o.add(&o_dag),
            o,
            noise_coeff: (eta * gamma).sqrt(),
            drift_core,
            m_base,
            euler_sandwich,
            kraus_sandwich,
            buf_a: ComplexMatrix::zeros(d),
            buf_m: ComplexMatrix::zeros(d),
            buf_out: ComplexMatrix::zeros(d),
        })
    }

    /// Advance rho by one step in place.
    pub fn step(&mut self, rho: &mut ComplexMatrix, dw: f64) -> Result<()> {
        match self.scheme {
            Scheme::Euler => self.euler_step(rho, dw),
            Scheme::Kraus => self.kraus_step(rho, dw),
        }
    }

    fn euler_step(&mut self, rho: &mut ComplexMatrix, dw: f64) -> Result<()> {
        let dt = self.dt;
        // out = rho + dt (A rho + (A rho)†)
        matmul_into(&mut self.buf_a, &self.drift_core, rho);
        self.buf_out.copy_from(rho);
        self.buf_out.add_scaled_plus_adjoint(&self.buf_a, Complex64::new(dt, 0.0));
        // + dt sum w K rho K†
        for (k, w) in &self.euler_sandwich {
            matmul_into(&mut self.buf_a, k, rho);
            matmul_bdagger_acc(&mut self.buf_out, &self.buf_a, k, Complex64::new(w * dt, 0.0));
        }
        // + sqrt(eta gamma) dW (O rho + rho O† - tr[(O+O†) rho] rho)
        let sig = trace_product(&self.o_sym, rho).re;
        matmul_into(&mut self.buf_a, &self.o, rho);
        let nc = self.noise_coeff * dw;
        self.buf_out.add_scaled_plus_adjoint(&self.buf_a, Complex64::new(nc, 0.0));
        self.buf_out.add_assign_scaled(rho, Complex64::new(-nc * sig, 0.0));
        self.buf_out.hermitize_in_place();
        let tr = self.buf_out.trace().re;
        if !tr.is_finite() || tr.abs() < 1e-12 {
            return Err(Error::VanishingTrace { trace: tr });
        }
        self.buf_out.scale_assign(1.0 / tr);
        rho.copy_from(&self.buf_out);
        Ok(())
    }

    fn kraus_step(&mut self, rho: &mut ComplexMatrix, dw: f64) -> Result<()> {
        let sig = trace_product(&self.o_sym, rho).re;
        let dy = self.noise_coeff * sig * self.dt + dw;
        // M = m_base + sqrt(eta gamma) dY O
        self.buf_m.copy_from(&self.m_base);
        self.buf_m.add_assign_scaled(&self.o, Complex64::new(self.noise_coeff * dy, 0.0));
        // out = M rho M† + sum K rho K† (dt folded into K)
        matmul_into(&mut self.buf_a, &self.buf_m, rho);
        self.buf_out.zero_assign();
        matmul_bdagger_acc(&mut self.buf_out, &self.buf_a, &self.buf_m, Complex64::new(1.0, 0.0));
        for k in &self.kraus_sandwich {
            matmul_into(&mut self.buf_a, k, rho);
            matmul_bdagger_acc(&mut self.buf_out, &self.buf_a, k, Complex64::new(1.0, 0.0));
        }
        let tr = self.buf_out.trace().re;
        if !tr.is_finite() || tr < 1e-12 {
            return Err(Error::VanishingTrace { trace: tr });
        }
        self.buf_out.scale_assign(1.0 / tr);
        self.buf_out.hermitize_in_place();
        rho.copy_from(&self.buf_out);
        Ok(())
    }
}

/// One Euler SME step (convenience wrapper over [`SmeIntegrator`]).
pub fn euler_step_sme(
    rho: &DensityMatrix,
    model: &ModelSpec,
    dt: f64,
    dw: f64,
) -> Result<DensityMatrix> {
    one_step(rho, model, dt, dw, Scheme::Euler)
}

/// One Kraus SME step (convenience wrapper over [`SmeIntegrator`]).
pub fn kraus_step_sme(
    rho: &DensityMatrix,
    model: &ModelSpec,
    dt: f64,
    dw: f64,
) -> Result<DensityMatrix> {
    one_step(rho, model, dt, dw, Scheme::Kraus)
}

fn one_step(
    rho: &DensityMatrix,
    model: &ModelSpec,
    dt: f64,
    dw: f64,
    scheme: Scheme,
) -> Result<DensityMatrix> {
    if rho.dim() != model.dim {
        return Err(Error::DimensionMismatch { left: rho.dim(), right: model.dim });
    }
    let mut integrator = SmeIntegrator::new(model, dt, scheme)?;
    let mut m = rho.matrix().clone();
    integrator.step(&mut m, dw)?;
    DensityMatrix::hermitian_unit_trace(m)
}

/// Core SME loop; `observer(step_index, t, rho)` sees every step including 0.
///
/// Positivity is checked per step for qubits (closed-form eigenvalues) and on
/// recorded steps for larger dimensions, where the check costs a full
/// eigendecomposition.
pub fn run_sme_with(
    model: &ModelSpec,
    rho0: &DensityMatrix,
    grid: &GridSpec,
    randomness: &RandomnessSpec,
    scheme: Scheme,
    mut observer: impl FnMut(usize, f64, &ComplexMatrix),
) -> Result<Diagnostics> {
    if rho0.dim() != model.dim {
        return Err(Error::DimensionMismatch { left: rho0.dim(), right: model.dim });
    }
    let mut integrator = SmeIntegrator::new(model, grid.dt, scheme)?;
    let mut rho = rho0.matrix().clone();
    let mut diag = Diagnostics::default();
    let check_every_step = model.dim <= 2;
    observer(0, 0.0, &rho);
    for step in 0..grid.n_steps {
        let dw = gaussian_increment(randomness, step as u64, grid.dt);
        integrator
            .step(&mut rho, dw)
            .map_err(|e| Error::StepFailed { step, source: Box::new(e) })?;
        if check_every_step || grid.is_recorded(step + 1) {
            let min_eig = min_eigenvalue_hermitian(&rho);
            diag.min_eigenvalue = diag.min_eigenvalue.min(min_eig);
            if min_eig < -POSITIVITY_TOL {
                diag.positivity_violations += 1;
            }
        }
        observer(step + 1, (step + 1) as f64 * grid.dt, &rho);
    }
    Ok(diag)
}

pub fn simulate_sme(
    model: &ModelSpec,
    rho0: &DensityMatrix,
    grid: &GridSpec,
    randomness: &RandomnessSpec,
    scheme: Scheme,
) -> Result<TrajectoryRecord<DensityMatrix>> {
    let mut times = Vec::with_capacity(grid.n_recorded());
    let mut states: Vec<DensityMatrix> = Vec::with_capacity(grid.n_recorded());
    let mut record_err = None;
    let diagnostics = run_sme_with(model, rho0, grid, randomness, scheme, |step, t, rho| {
        if grid.is_recorded(step) && record_err.is_none() {
            match DensityMatrix::hermitian_unit_trace(rho.clone()) {
                Ok(s) => {
                    times.push(t);
                    states.push(s);
                }
                Err(e) => record_err = Some((step, e)),
            }
        }
    })?;
    if let Some((step, e)) = record_err {
        return Err(Error::StepFailed { step, source: Box::new(e) });
    }
    Ok(TrajectoryRecord { grid: *grid, randomness: *randomness, scheme, times, states, diagnostics })
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

/// Trajectory `i` uses `RandomnessSpec(master_seed, i)`; execution order and
/// worker count cannot change the result.
pub fn simulate_scalar_ensemble(
    spec: &ScalarModelSpec,
    p0: f64,
    grid: &GridSpec,
    master_seed: u64,
    n_traj: usize,
) -> Result<Vec<TrajectoryRecord<f64>>> {
    (0..n_traj)
        .into_par_iter()
        .map(|i| simulate_scalar(spec, p0, grid, &RandomnessSpec::new(master_seed, i as u64)))
        .collect()
}

pub fn simulate_pair_ensemble(
    gamma: f64,
    initial: QubitState,
    grid: &GridSpec,
    master_seed: u64,
    n_traj: usize,
) -> Result<Vec<TrajectoryRecord<QubitState>>> {
    (0..n_traj)
        .into_par_iter()
        .map(|i| simulate_phase_pair(gamma, initial, grid, &RandomnessSpec::new(master_seed, i as u64)))
        .collect()
}

pub fn simulate_sme_ensemble(
    model: &ModelSpec,
    rho0: &DensityMatrix,
    grid: &GridSpec,
    master_seed: u64,
    n_traj: usize,
    scheme: Scheme,
) -> Result<Vec<TrajectoryRecord<DensityMatrix>>> {
    (0..n_traj)
        .into_par_iter()
        .map(|i| simulate_sme(model, rho0, grid, &RandomnessSpec::new(master_seed, i as u64), scheme))
        .collect()
}

// ---------------------------------------------------------------------------
// Serialization: CSV body + JSON header
// ---------------------------------------------------------------------------

pub fn write_scalar_csv<W: std::io::Write>(record: &TrajectoryRecord<f64>, w: &mut W) -> Result<()> {
    writeln!(w, "t,p")?;
    for (t, p) in record.times.iter().zip(record.states.iter()) {
        writeln!(w, "{t},{p}")?;
    }
    Ok(())
}

pub fn write_qubit_csv<W: std::io::Write>(
    record: &TrajectoryRecord<QubitState>,
    w: &mut W,
) -> Result<()> {
    writeln!(w, "t,p,re_u,im_u")?;
    for (t, q) in record.times.iter().zip(record.states.iter()) {
        writeln!(w, "{},{},{},{}", t, q.p, q.u.re, q.u.im)?;
    }
    Ok(())
}

pub fn write_density_csv<W: std::io::Write>(
    record: &TrajectoryRecord<DensityMatrix>,
    w: &mut W,
) -> Result<()> {
    let d = record.states.first().map(|s| s.dim()).unwrap_or(0);
    let mut header = String::from("t");
    for i in 0..d {
        for j in 0..d {
            header.push_str(&format!(",rho_{i}_{j}_re,rho_{i}_{j}_im"));
        }
    }
    writeln!(w, "{header}")?;
    for (t, rho) in record.times.iter().zip(record.states.iter()) {
        let mut line = format!("{t}");
        for i in 0..d {
            for j in 0..d {
                let z = rho.matrix()[(i, j)];
                line.push_str(&format!(",{},{}", z.re, z.im));
            }
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// JSON sidecar describing a trajectory file.
pub fn trajectory_header<S>(
    model_description: serde_json::Value,
    record: &TrajectoryRecord<S>,
) -> serde_json::Value {
    serde_json::json!({
        "model": model_description,
        "grid": record.grid,
        "master_seed": record.randomness.master_seed,
        "trajectory_index": record.randomness.trajectory_index,
        "scheme": record.scheme,
        "diagnostics": record.diagnostics,
        "version": env!("CARGO_PKG_VERSION"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{
        coherent_qubit_model, pure_collapse_qubit_model, thermal_qubit_model, ScalarModelSpec,
    };
    use crate::quantum::to_density;

    #[test]
    fn grid_recording_schedule() {
        let g = GridSpec::new(0.1, 10, 3).unwrap();
        let recorded: Vec<usize> = (0..=10).filter(|&k| g.is_recorded(k)).collect();
        assert_eq!(recorded, vec![0, 3, 6, 9, 10]);
        assert_eq!(g.n_recorded(), 5);
        let g2 = GridSpec::new(0.1, 9, 3).unwrap();
        assert_eq!(g2.n_recorded(), 4);
    }

    #[test]
    fn euler_scalar_step_values() {
        let s = euler_step_scalar(0.5, 0.0, 0.0, 0.1, 0.3).unwrap();
        assert_eq!(s.value, 0.5);
        assert!(!s.clamped);
        let s = euler_step_scalar(0.3, 0.2, 0.0, 0.1, 0.0).unwrap();
        assert!((s.value - 0.32).abs() < 1e-15);
        let s = euler_step_scalar(0.999, 0.0, 0.25, 5e-4, 0.05).unwrap();
        assert_eq!(s.value, 1.0);
        assert!(s.clamped);
        assert!(euler_step_scalar(f64::NAN, 0.0, 0.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn scalar_boundary_is_fixed_point() {
        let spec = ScalarModelSpec::pure_collapse(5.0).unwrap();
        let grid = GridSpec::new(1e-3, 500, 100).unwrap();
        for p0 in [0.0, 1.0] {
            let rec = simulate_scalar(&spec, p0, &grid, &RandomnessSpec::new(1, 0)).unwrap();
            assert!(rec.states.iter().all(|&p| p == p0));
        }
    }

    #[test]
    fn scalar_ode_limit_matches_exponential() {
        // gamma = 0: Euler tracks p_eq + (p0 - p_eq) exp(-lambda t); the Euler
        // bias is O(lambda^2 dt) so a small amplitude keeps it below 1e-6.
        let spec = ScalarModelSpec::collapse_thermal(1.0, 0.5, 0.0).unwrap();
        let grid = GridSpec::new(1e-4, 30_000, 1000).unwrap();
        let p0 = 0.55;
        let rec = simulate_scalar(&spec, p0, &grid, &RandomnessSpec::new(7, 0)).unwrap();
        for (t, p) in rec.times.iter().zip(rec.states.iter()) {
            let exact = 0.5 + (p0 - 0.5) * (-t).exp();
            assert!((p - exact).abs() < 1e-6, "t={t}: {p} vs {exact}");
        }
    }

    #[test]
    fn trajectories_are_bit_reproducible() {
        let spec = ScalarModelSpec::collapse_thermal(1.0, 0.5, 25.0).unwrap();
        let grid = GridSpec::new(5e-4, 2000, 10).unwrap();
        let rng = RandomnessSpec::new(123, 4);
        let a = simulate_scalar(&spec, 0.3, &grid, &rng).unwrap();
        let b = simulate_scalar(&spec, 0.3, &grid, &rng).unwrap();
        assert_eq!(a.times, b.times);
        assert!(a.states.iter().zip(b.states.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn sme_gamma_zero_is_identity() {
        let model = pure_collapse_qubit_model(0.0).unwrap();
        let rho = to_density(&QubitState::new(0.4, Complex64::new(0.2, 0.1)).unwrap());
        for scheme in [Scheme::Euler, Scheme::Kraus] {
            let out = one_step(&rho, &model, 1e-3, 0.02, scheme).unwrap();
            assert!(out.matrix().max_abs_diff(rho.matrix()) < 1e-12);
        }
    }

    #[test]
    fn sme_pointer_states_are_fixed() {
        let model = pure_collapse_qubit_model(3.0).unwrap();
        for k in 0..2 {
            let rho = DensityMatrix::basis_state(2, k);
            for scheme in [Scheme::Euler, Scheme::Kraus] {
                let out = one_step(&rho, &model, 1e-3, 0.7, scheme).unwrap();
                assert!(out.matrix().max_abs_diff(rho.matrix()) < 1e-12);
            }
        }
    }

    #[test]
    fn euler_and_kraus_agree_per_step() {
        // The Kraus map reproduces Euler's Ito dissipator through its dY^2
        // term, so pathwise agreement needs Ito-consistent increments
        // (dW^2 = dt); the residual difference is O(dt^{3/2}).
        let model = coherent_qubit_model(1.0, 5.0).unwrap();
        let rho = to_density(&QubitState::new(0.7, Complex64::new(0.3, 0.0)).unwrap());
        let dt: f64 = 1e-6;
        let dw = dt.sqrt();
        let e = euler_step_sme(&rho, &model, dt, dw).unwrap();
        let k = kraus_step_sme(&rho, &model, dt, dw).unwrap();
        assert!(e.matrix().max_abs_diff(k.matrix()) < 1e-9);

        // Averaged over dW = +/- sqrt(dt) the odd terms cancel and the
        // one-step disagreement is O(dt^2): halving dt shrinks it 4x.
        let weak_diff = |dt: f64| {
            let avg = |step: &dyn Fn(f64) -> DensityMatrix| {
                let a = step(dt.sqrt());
                let b = step(-dt.sqrt());
                a.matrix().add(b.matrix()).scale_re(0.5)
            };
            let me = avg(&|w| euler_step_sme(&rho, &model, dt, w).unwrap());
            let mk = avg(&|w| kraus_step_sme(&rho, &model, dt, w).unwrap());
            me.max_abs_diff(&mk)
        };
        let r = weak_diff(1e-4) / weak_diff(5e-5);
        assert!((3.5..=4.5).contains(&r), "O(dt^2) ratio {r}");
    }

    #[test]
    fn thermal_sme_diagonal_matches_scalar_step() {
        // Same Wiener increment, diagonal state: the SME population update at
        // O = sigma_z/2, rate gamma/4 equals the scalar update at rate gamma.
        let gamma_scalar = 4.0;
        let (l_up, l_down) = (0.4, 0.6);
        let model = thermal_qubit_model(
            l_up,
            l_down,
            crate::models::sme_rate_from_scalar(0.5, gamma_scalar),
        )
        .unwrap();
        let p = 0.37;
        let dt: f64 = 1e-6;
        let dw = 0.8 * dt.sqrt();
        let rho = to_density(&QubitState::diagonal(p).unwrap());
        let out = euler_step_sme(&rho, &model, dt, dw).unwrap();

        let spec = ScalarModelSpec::collapse_thermal(l_up + l_down, l_down / (l_up + l_down), gamma_scalar).unwrap();
        let (drift, diffusion) = scalar_drift_diffusion(&spec, p).unwrap();
        let scalar_next = euler_step_scalar(p, drift, diffusion, dt, dw).unwrap().value;
        assert!(
            (out.matrix()[(0, 0)].re - scalar_next).abs() < 1e-14,
            "{} vs {}",
            out.matrix()[(0, 0)].re,
            scalar_next
        );
    }

    #[test]
    fn kraus_stays_positive_where_euler_violates() {
        let model = pure_collapse_qubit_model(50.0).unwrap();
        let rho0 = to_density(&QubitState::new(0.5, Complex64::new(0.5, 0.0)).unwrap());
        let grid = GridSpec::new(2e-3, 2000, 50).unwrap();
        let rng = RandomnessSpec::new(2024, 0);
        let kraus = simulate_sme(&model, &rho0, &grid, &rng, Scheme::Kraus).unwrap();
        assert!(kraus.diagnostics.min_eigenvalue >= -1e-12);
        assert_eq!(kraus.diagnostics.positivity_violations, 0);
        let euler = simulate_sme(&model, &rho0, &grid, &rng, Scheme::Euler).unwrap();
        assert!(euler.diagnostics.positivity_violations > 0);
    }

    #[test]
    fn ensemble_martingale_and_determinism() {
        let spec = ScalarModelSpec::pure_collapse(1.0).unwrap();
        let grid = GridSpec::new(1e-3, 2000, 2000).unwrap();
        let p0 = 0.3;
        let records = simulate_scalar_ensemble(&spec, p0, &grid, 99, 2000).unwrap();
        let finals: Vec<f64> = records.iter().map(|r| *r.final_state()).collect();
        let n = finals.len() as f64;
        let mean = finals.iter().sum::<f64>() / n;
        let var = finals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        let stderr = (var / n).sqrt();
        assert!(
            (mean - p0).abs() <= 3.0 * stderr,
            "martingale violated: mean {mean}, p0 {p0}, stderr {stderr}"
        );

        // single- vs multi-worker determinism
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = pool.install(|| simulate_scalar_ensemble(&spec, p0, &grid, 99, 64)).unwrap();
        for (a, b) in serial.iter().zip(records.iter().take(64)) {
            assert!(a.states.iter().zip(b.states.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn single_trajectory_ensemble_equals_simulate() {
        let spec = ScalarModelSpec::pure_collapse(2.0).unwrap();
        let grid = GridSpec::new(1e-3, 100, 10).unwrap();
        let ens = simulate_scalar_ensemble(&spec, 0.4, &grid, 5, 1).unwrap();
        let single = simulate_scalar(&spec, 0.4, &grid, &RandomnessSpec::new(5, 0)).unwrap();
        assert_eq!(ens[0].states, single.states);
    }

    #[test]
    fn csv_round_shape() {
        let spec = ScalarModelSpec::pure_collapse(1.0).unwrap();
        let grid = GridSpec::new(0.25, 4, 2).unwrap();
        let rec = simulate_scalar(&spec, 0.5, &grid, &RandomnessSpec::new(1, 0)).unwrap();
        let mut buf = Vec::new();
        write_scalar_csv(&rec, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.trim().lines().collect();
        assert_eq!(lines[0], "t,p");
        assert_eq!(lines.len(), 1 + rec.times.len());
        rec.check_invariants().unwrap();
    }
}
