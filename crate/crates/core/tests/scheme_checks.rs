//! Integrator-level checks: strong convergence of the scalar Euler scheme and
//! scheduling invariance of matrix ensembles.

use collapse_core::models::{scalar_drift_diffusion, thermal_qubit_model, ScalarModelSpec};
use collapse_core::quantum::DensityMatrix;
use collapse_core::rng::{gaussian_increment, RandomnessSpec};
use collapse_core::sde::{euler_step_scalar, simulate_sme_ensemble, GridSpec, Scheme};

/// Integrate one path at resolution dt and at dt/2 with the same Brownian
/// path (fine increments summed pairwise); return the sup-norm difference.
fn coupled_paths_sup_diff(spec: &ScalarModelSpec, p0: f64, dt: f64, n_coarse: usize, rng: &RandomnessSpec) -> f64 {
    let fine_dt = dt / 2.0;
    let mut p_coarse = p0;
    let mut p_fine = p0;
    let mut sup: f64 = 0.0;
    for k in 0..n_coarse {
        let dw1 = gaussian_increment(rng, 2 * k as u64, fine_dt);
        let dw2 = gaussian_increment(rng, 2 * k as u64 + 1, fine_dt);
        for dw in [dw1, dw2] {
            let (dr, di) = scalar_drift_diffusion(spec, p_fine).unwrap();
            p_fine = euler_step_scalar(p_fine, dr, di, fine_dt, dw).unwrap().value;
        }
        let (dr, di) = scalar_drift_diffusion(spec, p_coarse).unwrap();
        p_coarse = euler_step_scalar(p_coarse, dr, di, dt, dw1 + dw2).unwrap().value;
        sup = sup.max((p_coarse - p_fine).abs());
    }
    sup
}

#[test]
fn strong_convergence_smoke() {
    // sup |X^dt - X^{dt/2}| shrinks like sqrt(dt): comparing dt and dt/4
    // should shrink the coupled difference by about 2x on average.
    let spec = ScalarModelSpec::collapse_thermal(1.0, 0.5, 25.0).unwrap();
    let horizon = 4.0;
    let mut log_ratio_sum = 0.0;
    let n_paths = 24;
    for i in 0..n_paths {
        let rng = RandomnessSpec::new(4242, i);
        let coarse = coupled_paths_sup_diff(&spec, 0.3, 2e-4, (horizon / 2e-4) as usize, &rng);
        let fine = coupled_paths_sup_diff(&spec, 0.3, 5e-5, (horizon / 5e-5) as usize, &rng);
        log_ratio_sum += (coarse / fine).ln();
    }
    let geo_mean_ratio = (log_ratio_sum / n_paths as f64).exp();
    assert!(
        (1.3..=3.2).contains(&geo_mean_ratio),
        "expected ~2x (order 1/2) reduction, got {geo_mean_ratio:.2}"
    );
}

#[test]
fn sme_ensemble_invariant_under_worker_count() {
    let model = thermal_qubit_model(0.5, 0.5, 50.0).unwrap();
    let rho0 = DensityMatrix::maximally_mixed(2);
    let grid = GridSpec::new(1e-3, 500, 100).unwrap();
    let parallel = simulate_sme_ensemble(&model, &rho0, &grid, 7, 8, Scheme::Kraus).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let serial =
        pool.install(|| simulate_sme_ensemble(&model, &rho0, &grid, 7, 8, Scheme::Kraus)).unwrap();
    for (a, b) in parallel.iter().zip(serial.iter()) {
        for (x, y) in a.states.iter().zip(b.states.iter()) {
            assert!(x.matrix().max_abs_diff(y.matrix()) == 0.0, "bitwise mismatch");
        }
    }
}
