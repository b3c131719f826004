//! Counter-based randomness for reproducible parallel Monte Carlo.
//!
//! Every random number is a pure function of
//! `(master_seed, trajectory_index, lane, counter)`: there is no sequential
//! generator state, so trajectories can be integrated in any order, on any
//! number of workers, and still produce bit-identical results. The mapping is
//! a SplitMix64-style avalanche over the combined counter, with uniform pairs
//! fed through Box-Muller for Gaussian increments.

use serde::{Deserialize, Serialize};

/// Identifies one trajectory's noise stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomnessSpec {
    pub master_seed: u64,
    pub trajectory_index: u64,
}

impl RandomnessSpec {
    pub fn new(master_seed: u64, trajectory_index: u64) -> Self {
        Self { master_seed, trajectory_index }
    }
}

/// Independent sub-streams within one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lane {
    /// Wiener increments driving an SDE.
    Wiener,
    /// Exponential/uniform draws (telegraph switch times).
    Telegraph,
    /// Observation noise for the hidden-Markov record.
    Observation,
    /// Anything else (initial conditions, auxiliary draws).
    Aux,
}

impl Lane {
    fn tag(self) -> u64 {
        match self {
            Lane::Wiener => 0x10,
            Lane::Telegraph => 0x21,
            Lane::Observation => 0x32,
            Lane::Aux => 0x43,
        }
    }
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Raw 64-bit value for (spec, lane, counter).
#[inline]
pub fn uniform_u64(spec: &RandomnessSpec, lane: Lane, counter: u64) -> u64 {
    let mut z = spec.master_seed ^ 0x9e37_79b9_7f4a_7c15;
    z = mix64(z.wrapping_add(spec.trajectory_index.wrapping_mul(0xd1b5_4a32_d192_ed03)));
    z = mix64(z ^ lane.tag().wrapping_mul(0x8cb9_2ba7_2f3d_8dd7));
    mix64(z.wrapping_add(counter.wrapping_mul(0x2545_f491_4f6c_dd1d)))
}

/// Uniform in (0, 1]; never exactly zero so it is safe inside a logarithm.
#[inline]
pub fn uniform_open01(spec: &RandomnessSpec, lane: Lane, counter: u64) -> f64 {
    (((uniform_u64(spec, lane, counter) >> 11) + 1) as f64) * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal draw, one per counter (Box-Muller on two uniforms).
#[inline]
pub fn standard_normal(spec: &RandomnessSpec, lane: Lane, counter: u64) -> f64 {
    let u1 = uniform_open01(spec, lane, 2 * counter);
    let u2 = uniform_open01(spec, lane, 2 * counter + 1);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Wiener increment dW ~ Normal(0, dt) for one integration step.
#[inline]
pub fn gaussian_increment(spec: &RandomnessSpec, step: u64, dt: f64) -> f64 {
    debug_assert!(dt > 0.0);
    standard_normal(spec, Lane::Wiener, step) * dt.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let spec = RandomnessSpec::new(42, 7);
        let a = gaussian_increment(&spec, 1234, 1e-3);
        let b = gaussian_increment(&spec, 1234, 1e-3);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn streams_differ_across_trajectories_and_lanes() {
        let a = RandomnessSpec::new(42, 0);
        let b = RandomnessSpec::new(42, 1);
        let va: Vec<u64> = (0..16).map(|k| uniform_u64(&a, Lane::Wiener, k)).collect();
        let vb: Vec<u64> = (0..16).map(|k| uniform_u64(&b, Lane::Wiener, k)).collect();
        assert_ne!(va, vb);
        let vt: Vec<u64> = (0..16).map(|k| uniform_u64(&a, Lane::Telegraph, k)).collect();
        assert_ne!(va, vt);
    }

    #[test]
    fn increment_moments() {
        // mean within 3*sqrt(dt/N), variance within 1% (law of large numbers)
        let spec = RandomnessSpec::new(20240615, 0);
        let n = 1_000_000u64;
        let dt = 1e-3;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for k in 0..n {
            let dw = gaussian_increment(&spec, k, dt);
            sum += dw;
            sum_sq += dw * dw;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        let band = 3.0 * (dt / n as f64).sqrt();
        assert!(mean.abs() < band, "mean {mean:.2e} outside 3-sigma band {band:.2e}");
        assert!((var - dt).abs() < 0.01 * dt, "variance {var:.5e} vs dt {dt:.0e}");
    }

    #[test]
    fn uniform_moments_and_range() {
        let spec = RandomnessSpec::new(7, 3);
        let n = 200_000u64;
        let mut sum = 0.0;
        for k in 0..n {
            let u = uniform_open01(&spec, Lane::Aux, k);
            assert!(u > 0.0 && u <= 1.0);
            sum += u;
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 3.0 / (12.0f64 * n as f64).sqrt());
    }

    #[test]
    fn cross_trajectory_correlation_is_small() {
        let n = 100_000u64;
        let s0 = RandomnessSpec::new(99, 0);
        let s1 = RandomnessSpec::new(99, 1);
        let mut dot = 0.0;
        for k in 0..n {
            dot += standard_normal(&s0, Lane::Wiener, k) * standard_normal(&s1, Lane::Wiener, k);
        }
        let corr = dot / n as f64;
        assert!(corr.abs() < 3.0 / (n as f64).sqrt() * 1.5, "corr {corr}");
    }
}
