//! Classical hidden-Markov counterpart of the scalar collapse equation.
//!
//! A two-state telegraph process R_t switches 0 -> 1 at rate `lambda p_eq`
//! and 1 -> 0 at rate `lambda (1 - p_eq)`, and is observed through the
//! diffusive record `dY = sqrt(gamma) R dt + dB`. Bayesian filtering of that
//! record gives the belief `p^f_t = P[R_t = 1 | record up to t]`, which in
//! the dt -> 0 limit obeys exactly
//!
//! ```text
//! dp = lambda (p_eq - p) dt + sqrt(gamma) p (1 - p) dW
//! ```
//!
//! — the same law as the collapse trajectory, spikes included. The
//! forward-backward (smoothed) probability conditions on the whole record
//! and has no spikes; comparing the two is the point of this module.

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::spikes::{detect_spikes_series, SpikeEvent};
use crate::error::{Error, Result};
use crate::models::ScalarModelSpec;
use crate::rng::{standard_normal, uniform_open01, Lane, RandomnessSpec};
use crate::sde::{simulate_scalar, GridSpec};
use crate::stats::{contingency_chi_square, ks_statistic_two_sample, ks_two_sample_critical_5pct};

/// Exact continuous-time telegraph path on [0, horizon].
#[derive(Debug, Clone)]
pub struct TelegraphPath {
    pub initial: u8,
    pub switch_times: Vec<f64>,
    pub horizon: f64,
}

impl TelegraphPath {
    pub fn value_at(&self, t: f64) -> u8 {
        let flips = self.switch_times.partition_point(|&s| s <= t);
        self.initial ^ ((flips % 2) as u8)
    }

    /// Values at grid times k dt for k = 0..=n (sequential scan).
    pub fn sample_on_grid(&self, dt: f64, n_steps: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(n_steps + 1);
        let mut r = self.initial;
        let mut next_switch = 0usize;
        for k in 0..=n_steps {
            let t = k as f64 * dt;
            while next_switch < self.switch_times.len() && self.switch_times[next_switch] <= t {
                r ^= 1;
                next_switch += 1;
            }
            out.push(r);
        }
        out
    }
}

/// Sample the telegraph process with exact exponential waiting times; the
/// initial state is drawn from the stationary law unless forced.
pub fn simulate_telegraph(
    lambda: f64,
    p_eq: f64,
    horizon: f64,
    randomness: &RandomnessSpec,
    initial: Option<u8>,
) -> Result<TelegraphPath> {
    if !(lambda > 0.0) || !(0.0 < p_eq && p_eq < 1.0) || !(horizon > 0.0) {
        return Err(Error::InvalidParameter {
            name: "telegraph",
            message: "need lambda > 0, p_eq in (0,1), horizon > 0".into(),
        });
    }
    let mut counter = 0u64;
    let mut draw = || {
        let u = uniform_open01(randomness, Lane::Telegraph, counter);
        counter += 1;
        u
    };
    let initial = initial.unwrap_or_else(|| if draw() < p_eq { 1 } else { 0 });
    let mut switch_times = Vec::new();
    let mut state = initial;
    let mut t = 0.0;
    loop {
        let rate = if state == 0 { lambda * p_eq } else { lambda * (1.0 - p_eq) };
        t += -draw().ln() / rate;
        if t >= horizon {
            break;
        }
        switch_times.push(t);
        state ^= 1;
    }
    Ok(TelegraphPath { initial, switch_times, horizon })
}

/// Diffusive observation record of a telegraph path:
/// `dY_k = sqrt(gamma) R(t_k) dt + Normal(0, dt)`.
#[derive(Debug, Clone)]
pub struct ObservationPath {
    pub dt: f64,
    pub increments: Vec<f64>,
}

pub fn observe(
    path: &TelegraphPath,
    gamma: f64,
    dt: f64,
    n_steps: usize,
    randomness: &RandomnessSpec,
) -> ObservationPath {
    let values = path.sample_on_grid(dt, n_steps);
    let sqrt_gamma = gamma.sqrt();
    let sqrt_dt = dt.sqrt();
    let increments = (0..n_steps)
        .map(|k| {
            let noise = standard_normal(randomness, Lane::Observation, k as u64) * sqrt_dt;
            sqrt_gamma * values[k] as f64 * dt + noise
        })
        .collect();
    ObservationPath { dt, increments }
}

/// Transition probabilities of the telegraph chain over one step (exact
/// two-state exponential form).
fn transition_matrix(lambda: f64, p_eq: f64, dt: f64) -> [[f64; 2]; 2] {
    let decay = (-lambda * dt).exp();
    // row = from, column = to
    [
        [1.0 - p_eq * (1.0 - decay), p_eq * (1.0 - decay)],
        [(1.0 - p_eq) * (1.0 - decay), 1.0 - (1.0 - p_eq) * (1.0 - decay)],
    ]
}

#[inline]
fn likelihoods(dy: f64, sqrt_gamma_dt: f64, dt: f64) -> [f64; 2] {
    // Gaussian likelihood of the increment under r = 0, 1 (common factors drop
    // out after normalization)
    let l0 = (-(dy * dy) / (2.0 * dt)).exp();
    let d1 = dy - sqrt_gamma_dt;
    let l1 = (-(d1 * d1) / (2.0 * dt)).exp();
    [l0, l1]
}

/// Real-time belief P[R_t = 1 | record so far]: per step, Markov prediction
/// then Bayes update with the Gaussian increment likelihoods. Output has
/// n_steps + 1 points and stays in [0, 1] with no clamping.
pub fn filter_forward(
    obs: &ObservationPath,
    lambda: f64,
    p_eq: f64,
    gamma: f64,
    p0: f64,
) -> Vec<f64> {
    let n = obs.increments.len();
    let dt = obs.dt;
    let trans = transition_matrix(lambda, p_eq, dt);
    let sqrt_gamma_dt = gamma.sqrt() * dt;
    let mut out = Vec::with_capacity(n + 1);
    let mut p = p0;
    out.push(p);
    for &dy in &obs.increments {
        let predicted = (1.0 - p) * trans[0][1] + p * trans[1][1];
        let l = likelihoods(dy, sqrt_gamma_dt, dt);
        let num = predicted * l[1];
        let den = num + (1.0 - predicted) * l[0];
        p = num / den;
        out.push(p);
    }
    out
}

/// Smoothed belief P[R_t = 1 | whole record]: forward filtering combined with
/// the backward likelihood recursion
/// `beta_k(r) = sum_r' T(r -> r') g(dY_k; r') beta_{k+1}(r')`,
/// renormalized per step against underflow.
pub fn smooth_forward_backward(
    obs: &ObservationPath,
    lambda: f64,
    p_eq: f64,
    gamma: f64,
    p0: f64,
) -> Vec<f64> {
    let n = obs.increments.len();
    let dt = obs.dt;
    let trans = transition_matrix(lambda, p_eq, dt);
    let sqrt_gamma_dt = gamma.sqrt() * dt;

    let forward = filter_forward(obs, lambda, p_eq, gamma, p0);

    let mut beta = vec![[1.0f64; 2]; n + 1];
    for k in (0..n).rev() {
        let l = likelihoods(obs.increments[k], sqrt_gamma_dt, dt);
        let next = beta[k + 1];
        let b0 = trans[0][0] * l[0] * next[0] + trans[0][1] * l[1] * next[1];
        let b1 = trans[1][0] * l[0] * next[0] + trans[1][1] * l[1] * next[1];
        let norm = b0.max(b1).max(f64::MIN_POSITIVE);
        beta[k] = [b0 / norm, b1 / norm];
    }

    forward
        .iter()
        .zip(beta.iter())
        .map(|(&pf, b)| {
            let num = pf * b[1];
            let den = num + (1.0 - pf) * b[0];
            if den > 0.0 {
                num / den
            } else {
                pf
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Law equivalence: filtered beliefs vs direct SDE
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct KsCheckpoint {
    pub t: f64,
    pub ks: f64,
    pub critical: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub lambda: f64,
    pub p_eq: f64,
    pub gamma: f64,
    pub n: usize,
    pub checkpoints: Vec<KsCheckpoint>,
    pub spike_chi_square: f64,
    pub spike_dof: usize,
    pub spike_critical: f64,
    pub spike_pass: bool,
    pub pass: bool,
}

/// Generate `n` (telegraph, record, filter) triples and `n` direct SDE
/// trajectories; compare the marginal laws at the checkpoints (two-sample KS)
/// and the spike height distributions (contingency chi-square).
#[allow(clippy::too_many_arguments)]
pub fn filtered_law_equivalence(
    lambda: f64,
    p_eq: f64,
    gamma: f64,
    n: usize,
    dt: f64,
    checkpoints: &[f64],
    master_seed: u64,
    spike_h_edges: &[f64],
) -> Result<EquivalenceReport> {
    if n < 1000 {
        return Err(Error::InsufficientEvents { found: n, needed: 1000, context: "equivalence" });
    }
    let horizon = checkpoints.iter().cloned().fold(0.0, f64::max);
    let n_steps = (horizon / dt).round() as usize;
    let grid = GridSpec::new(dt, n_steps, 1)?;
    let check_idx: Vec<usize> = checkpoints.iter().map(|&t| (t / dt).round() as usize).collect();
    let eps = 0.02;
    let delta = 0.01;

    struct ReplicaOut {
        filter_at: Vec<f64>,
        spikes: Vec<SpikeEvent>,
    }

    let filter_side: Vec<ReplicaOut> = (0..n)
        .into_par_iter()
        .map(|i| {
            let rng = RandomnessSpec::new(master_seed, i as u64);
            let path = simulate_telegraph(lambda, p_eq, horizon, &rng, None)?;
            let obs = observe(&path, gamma, dt, n_steps, &rng);
            let pf = filter_forward(&obs, lambda, p_eq, gamma, p_eq);
            let times: Vec<f64> = (0..=n_steps).map(|k| k as f64 * dt).collect();
            let spikes = detect_spikes_series(&times, &pf, eps, delta)?;
            Ok(ReplicaOut {
                filter_at: check_idx.iter().map(|&k| pf[k]).collect(),
                spikes,
            })
        })
        .collect::<Result<_>>()?;

    let spec = ScalarModelSpec::collapse_thermal(lambda, p_eq, gamma)?;
    let sde_side: Vec<ReplicaOut> = (0..n)
        .into_par_iter()
        .map(|i| {
            // disjoint trajectory-index space from the filter side
            let rng = RandomnessSpec::new(master_seed, (n + i) as u64);
            let rec = simulate_scalar(&spec, p_eq, &grid, &rng)?;
            let spikes = detect_spikes_series(&rec.times, &rec.states, eps, delta)?;
            Ok(ReplicaOut {
                filter_at: check_idx.iter().map(|&k| rec.states[k]).collect(),
                spikes,
            })
        })
        .collect::<Result<_>>()?;

    let mut out_checkpoints = Vec::new();
    for (ci, &t) in checkpoints.iter().enumerate() {
        let mut a: Vec<f64> = filter_side.iter().map(|r| r.filter_at[ci]).collect();
        let mut b: Vec<f64> = sde_side.iter().map(|r| r.filter_at[ci]).collect();
        let ks = ks_statistic_two_sample(&mut a, &mut b);
        let critical = ks_two_sample_critical_5pct(n, n);
        out_checkpoints.push(KsCheckpoint { t, ks, critical, pass: ks <= critical });
    }

    let bin_counts = |side: &[ReplicaOut]| -> Vec<u64> {
        let mut counts = vec![0u64; spike_h_edges.len() - 1];
        for r in side {
            for e in &r.spikes {
                if e.completed {
                    continue;
                }
                for (b, pair) in spike_h_edges.windows(2).enumerate() {
                    if e.height >= pair[0] && e.height < pair[1] {
                        counts[b] += 1;
                        break;
                    }
                }
            }
        }
        counts
    };
    let ca = bin_counts(&filter_side);
    let cb = bin_counts(&sde_side);
    let (chi, dof) = contingency_chi_square(&ca, &cb)?;
    let spike_critical = crate::stats::chi_square_quantile(dof, 0.95);
    let spike_pass = chi <= spike_critical;

    let pass = spike_pass && out_checkpoints.iter().all(|c| c.pass);
    Ok(EquivalenceReport {
        lambda,
        p_eq,
        gamma,
        n,
        checkpoints: out_checkpoints,
        spike_chi_square: chi,
        spike_dof: dof,
        spike_critical,
        spike_pass,
        pass,
    })
}

/// Count excursions above `height` in a path (both origins, spikes only).
pub fn count_spikes_above(times: &[f64], values: &[f64], height: f64) -> Result<usize> {
    let events = detect_spikes_series(times, values, 0.02, 0.01)?;
    Ok(events.iter().filter(|e| !e.completed && e.height >= height).count())
}

/// CSV export with columns (t, R_t, p_f, p_fb).
pub fn write_hmm_csv<W: std::io::Write>(
    path: &TelegraphPath,
    dt: f64,
    p_f: &[f64],
    p_fb: &[f64],
    w: &mut W,
) -> Result<()> {
    writeln!(w, "t,r,p_f,p_fb")?;
    let values = path.sample_on_grid(dt, p_f.len() - 1);
    for k in 0..p_f.len() {
        writeln!(w, "{},{},{},{}", k as f64 * dt, values[k], p_f[k], p_fb[k])?;
    }
    Ok(())
}
