//! Shared statistical utilities: sample moments, least squares, KS and
//! chi-square tests, binomial/Poisson error bars.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// (mean, standard error of the mean)
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = mean(xs);
    if xs.len() < 2 {
        return (m, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Ordinary least squares y = a x + b; returns (slope, intercept, r_squared).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::EmptyFitWindow {
            t_min: xs.first().copied().unwrap_or(f64::NAN),
            t_max: xs.last().copied().unwrap_or(f64::NAN),
            count: xs.len(),
        });
    }
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::EmptyFitWindow { t_min: mx, t_max: mx, count: xs.len() });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok((slope, intercept, r_squared))
}

/// Binomial standard error sqrt(f(1-f)/n).
pub fn binomial_stderr(fraction: f64, n: usize) -> f64 {
    (fraction * (1.0 - fraction) / n as f64).sqrt()
}

/// Kolmogorov-Smirnov statistic of `samples` against Exponential(rate).
pub fn ks_statistic_exponential(samples: &mut [f64], rate: f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in samples.iter().enumerate() {
        let f = 1.0 - (-rate * x).exp();
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// Two-sample KS statistic.
pub fn ks_statistic_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (n, m) = (a.len(), b.len());
    let mut i = 0;
    let mut j = 0;
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

/// One-sample KS critical value at the 5% level (asymptotic with the usual
/// finite-n correction).
pub fn ks_critical_5pct(n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    1.358 / (sn + 0.12 + 0.11 / sn)
}

/// Two-sample KS critical value at the 5% level.
pub fn ks_two_sample_critical_5pct(n: usize, m: usize) -> f64 {
    let ne = (n as f64 * m as f64) / (n as f64 + m as f64);
    let sn = ne.sqrt();
    1.358 / (sn + 0.12 + 0.11 / sn)
}

/// Upper quantile of chi-square with `dof` degrees of freedom.
pub fn chi_square_quantile(dof: usize, level: f64) -> f64 {
    ChiSquared::new(dof as f64).expect("dof >= 1").inverse_cdf(level)
}

/// P[X <= x] for chi-square with `dof` degrees of freedom.
pub fn chi_square_cdf(dof: usize, x: f64) -> f64 {
    ChiSquared::new(dof as f64).expect("dof >= 1").cdf(x)
}

/// 95% Poisson interval for a count (normal approximation, valid for k >= 10).
pub fn poisson_count_ci95(count: u64) -> (f64, f64) {
    let k = count as f64;
    let half = 1.96 * k.sqrt();
    ((k - half).max(0.0), k + half)
}

/// Two-way contingency chi-square for binned counts from two samples.
/// Returns (statistic, dof).
pub fn contingency_chi_square(counts_a: &[u64], counts_b: &[u64]) -> Result<(f64, usize)> {
    if counts_a.len() != counts_b.len() || counts_a.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "bins",
            message: "need >= 2 equal-length bins".into(),
        });
    }
    let tot_a: u64 = counts_a.iter().sum();
    let tot_b: u64 = counts_b.iter().sum();
    if tot_a == 0 || tot_b == 0 {
        return Err(Error::InsufficientEvents { found: 0, needed: 1, context: "chi-square" });
    }
    let grand = (tot_a + tot_b) as f64;
    let mut stat = 0.0;
    let mut dof = 0;
    for (&a, &b) in counts_a.iter().zip(counts_b.iter()) {
        let row = (a + b) as f64;
        if row == 0.0 {
            continue;
        }
        let ea = row * tot_a as f64 / grand;
        let eb = row * tot_b as f64 / grand;
        stat += (a as f64 - ea).powi(2) / ea + (b as f64 - eb).powi(2) / eb;
        dof += 1;
    }
    if dof < 2 {
        return Err(Error::InsufficientEvents { found: dof, needed: 2, context: "chi-square" });
    }
    Ok((stat, dof - 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_fit_exact() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| -2.0 * x + 0.7).collect();
        let (slope, intercept, r2) = linear_fit(&xs, &ys).unwrap();
        assert!((slope + 2.0).abs() < 1e-12);
        assert!((intercept - 0.7).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_reference_values() {
        // classic table values
        assert!((chi_square_quantile(10, 0.95) - 18.307).abs() < 0.01);
        assert!((chi_square_quantile(1, 0.95) - 3.841).abs() < 0.005);
        assert!((chi_square_cdf(2, 5.991) - 0.95).abs() < 1e-3);
    }

    #[test]
    fn ks_exponential_on_exact_quantiles() {
        // deterministic exponential quantile sample has tiny KS distance
        let n = 1000;
        let mut xs: Vec<f64> = (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) / n as f64;
                -(1.0 - u).ln() / 2.0
            })
            .collect();
        let d = ks_statistic_exponential(&mut xs, 2.0);
        assert!(d < 0.5 / n as f64 + 1e-9, "d = {d}");
        assert!(d < ks_critical_5pct(n));
    }

    #[test]
    fn ks_two_sample_identical_is_zero() {
        let mut a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let mut b = a.clone();
        assert_eq!(ks_statistic_two_sample(&mut a, &mut b), 0.0);
    }

    #[test]
    fn ks_two_sample_detects_shift() {
        let mut a: Vec<f64> = (0..500).map(|i| i as f64 / 500.0).collect();
        let mut b: Vec<f64> = (0..500).map(|i| i as f64 / 500.0 + 0.3).collect();
        let d = ks_statistic_two_sample(&mut a, &mut b);
        assert!(d > 0.25);
        assert!(d > ks_two_sample_critical_5pct(500, 500));
    }

    #[test]
    fn contingency_identical_counts() {
        let a = [100u64, 50, 25, 12];
        let (stat, dof) = contingency_chi_square(&a, &a).unwrap();
        assert!(stat < 1e-12);
        assert_eq!(dof, 3);
    }
}
