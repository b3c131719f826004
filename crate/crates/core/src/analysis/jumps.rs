//! Emergent-jump analysis.
//!
//! In the fast-collapse limit the state becomes a Markov chain between the
//! pointers |k> of the collapse operator. Writing the system Liouvillian in
//! the pointer basis as `[L(rho)]^{ij} = L^{ij}_{kl} rho^{kl}` and splitting
//! its blocks into
//!
//! ```text
//! A^i_l   = L^{ii}_{ll}                     (population -> population)
//! B^i_{kl} = L^{ii}_{kl} / sqrt(gamma)      (coherence -> population, k != l)
//! C^{ij}_l = L^{ij}_{ll} / sqrt(gamma)      (population -> coherence, i != j)
//! d_{kl}  = -Re L^{kl}_{kl} / gamma         (coherence decay, k != l)
//! ```
//!
//! the limiting jump rates are
//!
//! ```text
//! M_{i<-j} = A^i_j + 2 Re sum_{k<l} B^i_{kl} C^{kl}_j / Delta_{kl},
//! Delta_{kl} = 1/2 |nu_k - nu_l|^2 + d_{kl}.
//! ```
//!
//! For a pure Hamiltonian coupling this reduces to
//! `M_{i<-j} = (4/gamma) |H_{ij} / (nu_i - nu_j)|^2`, the Zeno-suppressed
//! coherent rate. Empirical rates come from hysteresis pointer assignment on
//! trajectories; the dwell-time test checks the Markov property itself.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::models::ModelSpec;
use crate::quantum::{CollapseOperator, DensityMatrix};
use crate::sde::TrajectoryRecord;
use crate::stats::{ks_critical_5pct, ks_statistic_exponential};

/// Tolerance for structural checks on the Liouvillian tensor.
const TENSOR_TOL: f64 = 1e-10;

/// The system Liouvillian in the collapse-operator eigenbasis, with the
/// scaling blocks identified. Index order of `entries` is
/// `[(i * d + j) * d * d + (k * d + l)]`.
#[derive(Debug, Clone)]
pub struct LiouvillianTensor {
    pub dim: usize,
    pub entries: Vec<Complex64>,
    pub a: Vec<f64>,
    pub b: Vec<Complex64>,
    pub c: Vec<Complex64>,
    pub d_coherence: Vec<f64>,
    pub gamma: f64,
    /// Declared scaling: when set, the Hamiltonian part of the model is
    /// understood as sqrt(gamma) H-tilde, so B and C are gamma-independent.
    pub zeno_rescaled: bool,
}

impl LiouvillianTensor {
    #[inline]
    pub fn entry(&self, i: usize, j: usize, k: usize, l: usize) -> Complex64 {
        self.entries[(i * self.dim + j) * self.dim * self.dim + (k * self.dim + l)]
    }

    /// Apply the tensor to a matrix written in the pointer basis.
    pub fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let d = self.dim;
        let mut out = ComplexMatrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..d {
                    for l in 0..d {
                        acc += self.entry(i, j, k, l) * rho[(k, l)];
                    }
                }
                out[(i, j)] = acc;
            }
        }
        out
    }
}

/// Build the tensor for `L(rho) = -i[H, rho] + sum_j D[L_j](rho)` in the
/// eigenbasis of the model's collapse operator and identify the scaling
/// blocks. Rejects Liouvillians that transport one coherence into another
/// through a dissipative channel (outside the rate formula's hypotheses).
pub fn liouvillian_from_model(model: &ModelSpec, zeno_rescaled: bool) -> Result<LiouvillianTensor> {
    let d = model.dim;
    let basis = model.collapse_op.eigenvectors();
    let to_pointer = |m: &ComplexMatrix| basis.adjoint().matmul(m).matmul(basis);

    let h = to_pointer(&model.hamiltonian);
    let channels: Vec<ComplexMatrix> = model.channels.iter().map(|c| to_pointer(c)).collect();

    let idx = |i: usize, j: usize, k: usize, l: usize| (i * d + j) * d * d + (k * d + l);
    let mut entries = vec![Complex64::new(0.0, 0.0); d * d * d * d];
    let mut channel_part = vec![Complex64::new(0.0, 0.0); d * d * d * d];

    // -i [H, rho]: coefficient of rho^{kl} in [.]^{ij} is -i(H_ik d_jl - d_ik H_lj)
    let minus_i = Complex64::new(0.0, -1.0);
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let mut v = Complex64::new(0.0, 0.0);
                    if j == l {
                        v += h[(i, k)];
                    }
                    if i == k {
                        v -= h[(l, j)];
                    }
                    entries[idx(i, j, k, l)] += minus_i * v;
                }
            }
        }
    }

    // D[L]: L_ik conj(L_jl) rho^{kl} - 1/2 (L†L)_ik rho^{kj} - 1/2 rho^{il} (L†L)_lj
    for ch in &channels {
        let g = ch.adjoint().matmul(ch);
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let mut v = ch[(i, k)] * ch[(j, l)].conj();
                        if j == l {
                            v -= 0.5 * g[(i, k)];
                        }
                        if i == k {
                            v -= 0.5 * g[(l, j)];
                        }
                        channel_part[idx(i, j, k, l)] += v;
                    }
                }
            }
        }
    }
    for (e, c) in entries.iter_mut().zip(channel_part.iter()) {
        *e += *c;
    }

    // Structural invariants.
    for k in 0..d {
        for l in 0..d {
            let col_sum: Complex64 = (0..d).map(|i| entries[idx(i, i, k, l)]).sum();
            if col_sum.norm() > TENSOR_TOL {
                return Err(Error::ScalingHypothesis {
                    message: format!("trace not preserved on column ({k},{l}): {col_sum}"),
                });
            }
        }
    }
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let lhs = entries[idx(i, j, k, l)];
                    let rhs = entries[idx(j, i, l, k)].conj();
                    if (lhs - rhs).norm() > TENSOR_TOL {
                        return Err(Error::ScalingHypothesis {
                            message: format!("hermiticity compatibility broken at ({i}{j},{k}{l})"),
                        });
                    }
                }
            }
        }
    }
    // Dissipative coherence -> distinct coherence transport is out of scope.
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            for k in 0..d {
                for l in 0..d {
                    if k == l || (i == k && j == l) {
                        continue;
                    }
                    let v = channel_part[idx(i, j, k, l)];
                    if v.norm() > TENSOR_TOL {
                        return Err(Error::ScalingHypothesis {
                            message: format!(
                                "dissipative coherence transport ({k},{l}) -> ({i},{j}) = {v}"
                            ),
                        });
                    }
                }
            }
        }
    }

    // Identify scaling blocks.
    let gamma = model.collapse_rate;
    let sqrt_gamma = gamma.sqrt();
    let mut a = vec![0.0; d * d];
    for i in 0..d {
        for l in 0..d {
            let v = entries[idx(i, i, l, l)];
            a[i * d + l] = v.re;
        }
    }
    // classical-generator checks on A
    for l in 0..d {
        let mut col = 0.0;
        for i in 0..d {
            if i != l && a[i * d + l] < -TENSOR_TOL {
                return Err(Error::ScalingHypothesis {
                    message: format!("A has negative off-diagonal entry at ({i},{l})"),
                });
            }
            col += a[i * d + l];
        }
        if col.abs() > TENSOR_TOL {
            return Err(Error::ScalingHypothesis {
                message: format!("A column {l} sums to {col}"),
            });
        }
    }

    let mut b = vec![Complex64::new(0.0, 0.0); d * d * d];
    let mut c = vec![Complex64::new(0.0, 0.0); d * d * d];
    if sqrt_gamma > 0.0 {
        for i in 0..d {
            for k in 0..d {
                for l in 0..d {
                    if k != l {
                        b[(i * d + k) * d + l] = entries[idx(i, i, k, l)] / sqrt_gamma;
                    }
                }
            }
        }
        for i in 0..d {
            for j in 0..d {
                if i == j {
                    continue;
                }
                for l in 0..d {
                    c[(i * d + j) * d + l] = entries[idx(i, j, l, l)] / sqrt_gamma;
                }
            }
        }
    }

    let mut d_coherence = vec![0.0; d * d];
    if gamma > 0.0 {
        for k in 0..d {
            for l in 0..d {
                if k == l {
                    continue;
                }
                let decay = -channel_part[idx(k, l, k, l)].re / gamma;
                if decay < -TENSOR_TOL {
                    return Err(Error::ScalingHypothesis {
                        message: format!("negative coherence decay d_({k},{l}) = {decay}"),
                    });
                }
                d_coherence[k * d + l] = decay.max(0.0);
            }
        }
    }

    Ok(LiouvillianTensor { dim: d, entries, a, b, c, d_coherence, gamma, zeno_rescaled })
}

/// Markov rate matrix M_{i<-j}: non-negative off-diagonals, columns sum to
/// zero. Stored row-major: `m[i][j] = M_{i<-j}`.
#[derive(Debug, Clone, Serialize)]
pub struct RateMatrix {
    pub dim: usize,
    pub m: Vec<Vec<f64>>,
}

impl RateMatrix {
    pub fn from_off_diagonal(dim: usize, off: &dyn Fn(usize, usize) -> f64) -> Result<Self> {
        let mut m = vec![vec![0.0; dim]; dim];
        for i in 0..dim {
            for j in 0..dim {
                if i == j {
                    continue;
                }
                let v = off(i, j);
                if !v.is_finite() {
                    return Err(Error::NonFinite { context: "rate matrix" });
                }
                if v < -1e-9 {
                    return Err(Error::ScalingHypothesis {
                        message: format!("negative jump rate M[{i}<-{j}] = {v}"),
                    });
                }
                m[i][j] = v.max(0.0);
            }
        }
        for j in 0..dim {
            let col: f64 = (0..dim).filter(|&i| i != j).map(|i| m[i][j]).sum();
            m[j][j] = -col;
        }
        Ok(Self { dim, m })
    }

    pub fn rate(&self, to: usize, from: usize) -> f64 {
        self.m[to][from]
    }

    /// Total rate out of state j.
    pub fn exit_rate(&self, j: usize) -> f64 {
        -self.m[j][j]
    }
}

/// Limiting jump rates from the tensor's scaling blocks and the collapse
/// operator's eigenvalues (invariant under a uniform eigenvalue shift).
pub fn theoretical_rates(tensor: &LiouvillianTensor, op: &CollapseOperator) -> Result<RateMatrix> {
    let d = tensor.dim;
    if op.dim() != d {
        return Err(Error::DimensionMismatch { left: op.dim(), right: d });
    }
    let nu = op.eigenvalues();
    RateMatrix::from_off_diagonal(d, &|i, j| {
        let mut coherent = 0.0;
        for k in 0..d {
            for l in (k + 1)..d {
                let delta = 0.5 * (nu[k] - nu[l]).powi(2) + tensor.d_coherence[k * d + l];
                let bik = tensor.b[(i * d + k) * d + l];
                let ckl = tensor.c[(k * d + l) * d + j];
                coherent += 2.0 * (bik * ckl / delta).re;
            }
        }
        tensor.a[i * d + j] + coherent
    })
}

// ---------------------------------------------------------------------------
// Empirical jumps: hysteresis pointer assignment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpEvent {
    pub time: f64,
    pub from_state: usize,
    pub to_state: usize,
}

/// Labeled stretch of a trajectory; `label = None` before the first pointer
/// is reached.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Segment {
    pub label: Option<usize>,
    pub t_start: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointerAssignment {
    pub n_pointers: usize,
    pub segments: Vec<Segment>,
    /// Time spent carrying each label.
    pub occupation: Vec<f64>,
    pub undefined_time: f64,
}

/// Streaming hysteresis tracker: the label switches to pointer k when its
/// fidelity exceeds 1 - theta, and is kept until another pointer wins. Jump
/// times are recorded at label change, i.e. at transition completion.
pub struct HysteresisTracker {
    theta: f64,
    n_pointers: usize,
    label: Option<usize>,
    segment_start: f64,
    last_t: f64,
    events: Vec<JumpEvent>,
    segments: Vec<Segment>,
}

impl HysteresisTracker {
    pub fn new(n_pointers: usize, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 0.5) {
            return Err(Error::InvalidParameter {
                name: "theta",
                message: "must be in (0, 0.5)".into(),
            });
        }
        Ok(Self {
            theta,
            n_pointers,
            label: None,
            segment_start: 0.0,
            last_t: 0.0,
            events: Vec::new(),
            segments: Vec::new(),
        })
    }

    pub fn push(&mut self, t: f64, fidelities: &[f64]) {
        debug_assert_eq!(fidelities.len(), self.n_pointers);
        self.last_t = t;
        let mut winner = None;
        for (k, &f) in fidelities.iter().enumerate() {
            if f > 1.0 - self.theta {
                winner = Some(k);
                break;
            }
        }
        match (self.label, winner) {
            (None, Some(k)) => {
                self.segments.push(Segment { label: None, t_start: self.segment_start, t_end: t });
                self.label = Some(k);
                self.segment_start = t;
            }
            (Some(j), Some(k)) if j != k => {
                self.segments.push(Segment { label: Some(j), t_start: self.segment_start, t_end: t });
                self.events.push(JumpEvent { time: t, from_state: j, to_state: k });
                self.label = Some(k);
                self.segment_start = t;
            }
            _ => {}
        }
    }

    pub fn finish(mut self) -> (PointerAssignment, Vec<JumpEvent>) {
        self.segments.push(Segment {
            label: self.label,
            t_start: self.segment_start,
            t_end: self.last_t,
        });
        let mut occupation = vec![0.0; self.n_pointers];
        let mut undefined_time = 0.0;
        for s in &self.segments {
            let len = s.t_end - s.t_start;
            match s.label {
                Some(k) => occupation[k] += len,
                None => undefined_time += len,
            }
        }
        (
            PointerAssignment {
                n_pointers: self.n_pointers,
                segments: self.segments,
                occupation,
                undefined_time,
            },
            self.events,
        )
    }
}

/// Pointer assignment for a scalar population trajectory (pointer 0 is the
/// p = 0 boundary, matching the ascending eigenvalue order of sigma_z-type
/// collapse operators; pointer 1 is p = 1).
pub fn extract_jumps_scalar(
    times: &[f64],
    populations: &[f64],
    theta: f64,
) -> Result<(PointerAssignment, Vec<JumpEvent>)> {
    let mut tracker = HysteresisTracker::new(2, theta)?;
    for (&t, &p) in times.iter().zip(populations.iter()) {
        tracker.push(t, &[1.0 - p, p]);
    }
    Ok(tracker.finish())
}

/// Pointer assignment for a density-matrix trajectory.
pub fn extract_jumps(
    record: &TrajectoryRecord<DensityMatrix>,
    op: &CollapseOperator,
    theta: f64,
) -> Result<(PointerAssignment, Vec<JumpEvent>)> {
    let mut tracker = HysteresisTracker::new(op.dim(), theta)?;
    for (&t, rho) in record.times.iter().zip(record.states.iter()) {
        tracker.push(t, &op.pointer_fidelities(rho));
    }
    Ok(tracker.finish())
}

// ---------------------------------------------------------------------------
// Empirical rates and dwell-time statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalRates {
    pub dim: usize,
    /// rate[i][j] = events j->i / occupation(j)
    pub rates: Vec<Vec<f64>>,
    pub ci_low: Vec<Vec<f64>>,
    pub ci_high: Vec<Vec<f64>>,
    pub counts: Vec<Vec<u64>>,
    pub occupation: Vec<f64>,
    /// True when every observed transition has >= 10 events.
    pub reliable: bool,
}

/// Pooled empirical rate matrix over one or more trajectories.
pub fn empirical_rates(
    events: &[Vec<JumpEvent>],
    assignments: &[PointerAssignment],
) -> Result<EmpiricalRates> {
    if assignments.is_empty() {
        return Err(Error::InsufficientEvents { found: 0, needed: 1, context: "empirical rates" });
    }
    let d = assignments[0].n_pointers;
    let mut counts = vec![vec![0u64; d]; d];
    let mut occupation = vec![0.0; d];
    for a in assignments {
        for (k, occ) in a.occupation.iter().enumerate() {
            occupation[k] += occ;
        }
    }
    let mut total_events = 0usize;
    for evs in events {
        for e in evs {
            counts[e.to_state][e.from_state] += 1;
            total_events += 1;
        }
    }
    if total_events == 0 {
        return Err(Error::InsufficientEvents { found: 0, needed: 1, context: "empirical rates" });
    }
    let mut rates = vec![vec![0.0; d]; d];
    let mut ci_low = vec![vec![0.0; d]; d];
    let mut ci_high = vec![vec![0.0; d]; d];
    let mut reliable = true;
    for i in 0..d {
        for j in 0..d {
            if i == j || occupation[j] <= 0.0 {
                continue;
            }
            let k = counts[i][j];
            rates[i][j] = k as f64 / occupation[j];
            let (lo, hi) = crate::stats::poisson_count_ci95(k);
            ci_low[i][j] = lo / occupation[j];
            ci_high[i][j] = hi / occupation[j];
            if k > 0 && k < 10 {
                reliable = false;
            }
        }
    }
    for j in 0..d {
        rates[j][j] = -(0..d).filter(|&i| i != j).map(|i| rates[i][j]).sum::<f64>();
    }
    Ok(EmpiricalRates { dim: d, rates, ci_low, ci_high, counts, occupation, reliable })
}

#[derive(Debug, Clone, Serialize)]
pub struct DwellStateReport {
    pub state: usize,
    pub n: usize,
    pub mean_dwell: f64,
    pub fitted_rate: f64,
    pub ks_statistic: f64,
    pub ks_critical: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DwellReport {
    pub per_state: Vec<DwellStateReport>,
    pub pass: bool,
}

/// Completed dwell times per state (first and last labeled segments of each
/// trajectory are censored and dropped).
pub fn dwell_times(assignments: &[PointerAssignment]) -> Vec<Vec<f64>> {
    let d = assignments.first().map(|a| a.n_pointers).unwrap_or(0);
    let mut out = vec![Vec::new(); d];
    for a in assignments {
        let labeled: Vec<&Segment> = a.segments.iter().filter(|s| s.label.is_some()).collect();
        if labeled.len() <= 2 {
            continue;
        }
        for s in &labeled[1..labeled.len() - 1] {
            out[s.label.unwrap()].push(s.t_end - s.t_start);
        }
    }
    out
}

/// Kolmogorov-Smirnov test of dwell times per state against the exponential
/// law with the empirically fitted exit rate.
pub fn dwell_time_test(assignments: &[PointerAssignment]) -> Result<DwellReport> {
    let dwells = dwell_times(assignments);
    let mut per_state = Vec::new();
    for (state, mut xs) in dwells.into_iter().enumerate() {
        if xs.len() < 50 {
            return Err(Error::InsufficientEvents {
                found: xs.len(),
                needed: 50,
                context: "dwell-time test",
            });
        }
        let mean_dwell = crate::stats::mean(&xs);
        let rate = 1.0 / mean_dwell;
        let ks = ks_statistic_exponential(&mut xs, rate);
        let crit = ks_critical_5pct(xs.len());
        per_state.push(DwellStateReport {
            state,
            n: xs.len(),
            mean_dwell,
            fitted_rate: rate,
            ks_statistic: ks,
            ks_critical: crit,
            pass: ks < crit,
        });
    }
    let pass = per_state.iter().all(|s| s.pass);
    Ok(DwellReport { per_state, pass })
}
