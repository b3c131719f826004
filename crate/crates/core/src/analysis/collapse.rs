//! Verification of pure-collapse phenomenology: Born-rule statistics,
//! exponential shrinking of the distance-to-pointer and of the coherence,
//! and the martingale property of the population.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sde::TrajectoryRecord;
use crate::stats::{binomial_stderr, linear_fit, mean_stderr};

/// Result of a least-squares exponential fit `values ~ exp(-rate t)`.
#[derive(Debug, Clone, Serialize)]
pub struct ExponentialFit {
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub n_points: usize,
}

/// Least squares on log(values) over `window`; `rate` is minus the slope.
pub fn fit_exponential_decay(
    times: &[f64],
    values: &[f64],
    window: (f64, f64),
) -> Result<ExponentialFit> {
    let (t_min, t_max) = window;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in times.iter().zip(values.iter()) {
        if t < t_min || t > t_max {
            continue;
        }
        if !(v > 0.0) {
            return Err(Error::NonPositiveFitData);
        }
        xs.push(t);
        ys.push(v.ln());
    }
    if xs.len() < 2 {
        return Err(Error::EmptyFitWindow { t_min, t_max, count: xs.len() });
    }
    let (slope, intercept, r_squared) = linear_fit(&xs, &ys)?;
    Ok(ExponentialFit {
        rate: -slope,
        intercept,
        r_squared,
        window,
        n_points: xs.len(),
    })
}

/// Default fit window: skip the initial transient (t < 2/gamma) and stop once
/// the ensemble mean falls below 10x its Monte Carlo standard error.
pub fn decay_fit_window(gamma: f64, times: &[f64], means: &[f64], stderrs: &[f64]) -> (f64, f64) {
    let t_min = 2.0 / gamma;
    let mut t_max = *times.last().unwrap_or(&t_min);
    for ((&t, &m), &se) in times.iter().zip(means.iter()).zip(stderrs.iter()) {
        if t <= t_min {
            continue;
        }
        if m < 10.0 * se {
            t_max = t;
            break;
        }
    }
    (t_min, t_max)
}

/// Ensemble mean and standard error of an observable along the common grid.
pub fn ensemble_mean_path<S, F>(records: &[TrajectoryRecord<S>], f: F) -> (Vec<f64>, Vec<f64>, Vec<f64>)
where
    F: Fn(&S) -> f64,
{
    let n_times = records[0].times.len();
    let times = records[0].times.clone();
    let mut means = Vec::with_capacity(n_times);
    let mut stderrs = Vec::with_capacity(n_times);
    for k in 0..n_times {
        let samples: Vec<f64> = records.iter().map(|r| f(&r.states[k])).collect();
        let (m, se) = mean_stderr(&samples);
        means.push(m);
        stderrs.push(se);
    }
    (times, means, stderrs)
}

#[derive(Debug, Clone, Serialize)]
pub struct BornStatistics {
    pub fraction_up: f64,
    pub stderr: f64,
    pub n_up: usize,
    pub n_down: usize,
    pub n_unresolved: usize,
    pub threshold: f64,
}

/// Fraction of final populations above `threshold`. Populations caught in
/// `[1-threshold, threshold]` have not collapsed yet; more than 1% of those
/// is an error (the horizon was too short).
pub fn born_statistics(final_populations: &[f64], threshold: f64) -> Result<BornStatistics> {
    if !(0.5..1.0).contains(&threshold) {
        return Err(Error::InvalidParameter {
            name: "threshold",
            message: "must be in (0.5, 1)".into(),
        });
    }
    let n = final_populations.len();
    if n == 0 {
        return Err(Error::InsufficientEvents { found: 0, needed: 1, context: "born test" });
    }
    let n_up = final_populations.iter().filter(|&&p| p > threshold).count();
    let n_down = final_populations.iter().filter(|&&p| p < 1.0 - threshold).count();
    let n_unresolved = n - n_up - n_down;
    if n_unresolved as f64 > 0.01 * n as f64 {
        return Err(Error::TooManyUnresolved { unresolved: n_unresolved, total: n });
    }
    let fraction_up = n_up as f64 / n as f64;
    Ok(BornStatistics {
        fraction_up,
        stderr: binomial_stderr(fraction_up, n),
        n_up,
        n_down,
        n_unresolved,
        threshold,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MartingaleCheckpoint {
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MartingaleReport {
    pub p0: f64,
    pub checkpoints: Vec<MartingaleCheckpoint>,
    pub pass: bool,
}

/// |mean p_t - p0| <= 3 stderr at each checkpoint (report-only; `pass`
/// reflects all checkpoints).
pub fn martingale_test(
    records: &[TrajectoryRecord<f64>],
    checkpoints: &[f64],
    p0: f64,
) -> MartingaleReport {
    let mut out = Vec::with_capacity(checkpoints.len());
    for &t in checkpoints {
        let idx = records[0].index_at(t);
        let samples: Vec<f64> = records.iter().map(|r| r.states[idx]).collect();
        let (m, se) = mean_stderr(&samples);
        let z = if se > 0.0 { (m - p0) / se } else { 0.0 };
        out.push(MartingaleCheckpoint { t: records[0].times[idx], mean: m, stderr: se, z });
    }
    let pass = out.iter().all(|c| c.z.abs() <= 3.0);
    MartingaleReport { p0, checkpoints: out, pass }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_exact_rate() {
        let times: Vec<f64> = (0..100).map(|i| i as f64 * 0.05).collect();
        let values: Vec<f64> = times.iter().map(|t| 3.0 * (-2.0 * t).exp()).collect();
        let fit = fit_exponential_decay(&times, &values, (0.0, 5.0)).unwrap();
        assert!((fit.rate - 2.0).abs() < 1e-10);
        assert!((fit.intercept - 3.0f64.ln()).abs() < 1e-10);
        assert!(fit.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn fit_rejects_nonpositive() {
        let times = vec![0.0, 1.0, 2.0];
        let values = vec![1.0, 0.0, -1.0];
        assert!(matches!(
            fit_exponential_decay(&times, &values, (0.0, 3.0)),
            Err(Error::NonPositiveFitData)
        ));
    }

    #[test]
    fn fit_rejects_empty_window() {
        let times = vec![0.0, 1.0];
        let values = vec![1.0, 0.5];
        assert!(matches!(
            fit_exponential_decay(&times, &values, (5.0, 6.0)),
            Err(Error::EmptyFitWindow { .. })
        ));
    }

    #[test]
    fn born_counts() {
        let finals = vec![0.999, 0.001, 0.9999, 0.002, 1.0];
        let b = born_statistics(&finals, 0.99).unwrap();
        assert_eq!(b.n_up, 3);
        assert_eq!(b.n_down, 2);
        assert_eq!(b.n_unresolved, 0);
        assert!((b.fraction_up - 0.6).abs() < 1e-12);
    }

    #[test]
    fn born_flags_unresolved() {
        let finals = vec![0.5; 10];
        assert!(matches!(
            born_statistics(&finals, 0.99),
            Err(Error::TooManyUnresolved { .. })
        ));
    }

    #[test]
    fn born_degenerate_input() {
        let finals = vec![1.0; 50];
        let b = born_statistics(&finals, 0.99).unwrap();
        assert_eq!(b.fraction_up, 1.0);
        assert_eq!(b.stderr, 0.0);
    }
}
