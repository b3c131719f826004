//! Hidden-Markov equivalence beyond the acceptance point: a second parameter
//! set and a deliberately mismatched negative control.

use collapse_core::hmm::{filter_forward, filtered_law_equivalence, observe, simulate_telegraph};
use collapse_core::models::ScalarModelSpec;
use collapse_core::rng::RandomnessSpec;
use collapse_core::sde::{simulate_scalar, GridSpec};
use collapse_core::stats::{ks_statistic_two_sample, ks_two_sample_critical_5pct};

#[test]
fn equivalence_second_parameter_point() {
    let report = filtered_law_equivalence(
        1.0,
        0.8,
        100.0,
        1000,
        2.5e-4,
        &[1.0, 5.0, 20.0],
        1700,
        &[0.05, 0.1, 0.2, 0.4, 1.0],
    )
    .unwrap();
    for c in &report.checkpoints {
        assert!(c.pass, "KS {:.4} at t={} exceeds {:.4}", c.ks, c.t, c.critical);
    }
    assert!(
        report.spike_pass,
        "spike chi-square {:.1} vs {:.1}",
        report.spike_chi_square,
        report.spike_critical
    );
}

/// Negative control: filtering a gamma = 100 record while the direct SDE
/// runs at gamma = 400 must be detected by the marginal comparison.
#[test]
fn mismatched_gamma_fails() {
    let (lambda, p_eq) = (1.0, 0.5);
    let dt = 5e-4;
    let t = 3.0;
    let n_steps = (t / dt) as usize;
    let n = 800;

    let filter_finals: Vec<f64> = (0..n)
        .map(|i| {
            let rng = RandomnessSpec::new(1800, i as u64);
            let path = simulate_telegraph(lambda, p_eq, t + dt, &rng, None).unwrap();
            let obs = observe(&path, 100.0, dt, n_steps, &rng);
            *filter_forward(&obs, lambda, p_eq, 100.0, p_eq).last().unwrap()
        })
        .collect();

    let spec = ScalarModelSpec::collapse_thermal(lambda, p_eq, 400.0).unwrap();
    let grid = GridSpec::new(dt, n_steps, n_steps).unwrap();
    let sde_finals: Vec<f64> = (0..n)
        .map(|i| {
            let rng = RandomnessSpec::new(1801, i as u64);
            *simulate_scalar(&spec, p_eq, &grid, &rng).unwrap().final_state()
        })
        .collect();

    let mut a = filter_finals;
    let mut b = sde_finals;
    let ks = ks_statistic_two_sample(&mut a, &mut b);
    let critical = ks_two_sample_critical_5pct(n, n);
    assert!(
        ks > 2.0 * critical,
        "mismatched rates must separate the marginals: KS {ks:.4} vs critical {critical:.4}"
    );
}
