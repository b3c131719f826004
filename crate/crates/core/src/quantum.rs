//! Quantum state types and the two superoperators from which every model
//! in this crate is assembled:
//!
//! ```text
//! D[O](rho) = O rho O† - 1/2 {O†O, rho}          (dissipator)
//! H[O](rho) = O rho + rho O† - tr[(O+O†) rho] rho (innovation / collapse)
//! ```
//!
//! Both preserve Hermiticity and are traceless on unit-trace states, which is
//! what makes the stochastic master equation probability-conserving term by
//! term. Eigenprojectors of a Hermitian O are fixed points of `H[O]`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{
    eigen_hermitian, min_eigenvalue_hermitian, ComplexMatrix, EigenDecomposition, HERMITICITY_TOL,
};

pub const TRACE_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-10;
pub const PURITY_TOL: f64 = 1e-12;
/// Violations beyond 100x the stated tolerance are hard errors.
pub const ABORT_FACTOR: f64 = 100.0;

/// D x D density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: ComplexMatrix,
}

impl DensityMatrix {
    /// Fully validated constructor (Hermiticity, trace, positivity).
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        let dev = m.hermiticity_deviation();
        if dev > HERMITICITY_TOL * ABORT_FACTOR {
            return Err(Error::NotHermitian { deviation: dev, tolerance: HERMITICITY_TOL });
        }
        let tr = m.trace();
        let tr_dev = (tr - Complex64::new(1.0, 0.0)).norm();
        if tr_dev > TRACE_TOL * ABORT_FACTOR {
            return Err(Error::TraceNotOne { deviation: tr_dev, tolerance: TRACE_TOL });
        }
        let min_eig = min_eigenvalue_hermitian(&m);
        if min_eig < -POSITIVITY_TOL * ABORT_FACTOR {
            return Err(Error::NotPositive { min_eigenvalue: min_eig });
        }
        Ok(Self { m: m.hermitized() })
    }

    /// Constructor for integrator output: enforces Hermiticity and trace but
    /// deliberately skips the positivity check. The Euler scheme detects and
    /// counts positivity violations instead of repairing them, so its states
    /// may be indefinite.
    pub fn hermitian_unit_trace(m: ComplexMatrix) -> Result<Self> {
        let dev = m.hermiticity_deviation();
        if dev > HERMITICITY_TOL * ABORT_FACTOR {
            return Err(Error::NotHermitian { deviation: dev, tolerance: HERMITICITY_TOL });
        }
        let tr_dev = (m.trace() - Complex64::new(1.0, 0.0)).norm();
        if tr_dev > TRACE_TOL * ABORT_FACTOR {
            return Err(Error::TraceNotOne { deviation: tr_dev, tolerance: TRACE_TOL });
        }
        Ok(Self { m: m.hermitized() })
    }

    /// Pure state |k><k| in the canonical basis.
    pub fn basis_state(dim: usize, k: usize) -> Self {
        let mut m = ComplexMatrix::zeros(dim);
        m[(k, k)] = Complex64::new(1.0, 0.0);
        Self { m }
    }

    /// Pure state from a (not necessarily normalized) vector.
    pub fn pure(vector: &[Complex64]) -> Result<Self> {
        let norm_sq: f64 = vector.iter().map(|z| z.norm_sqr()).sum();
        if norm_sq <= 0.0 || !norm_sq.is_finite() {
            return Err(Error::NonFinite { context: "pure state vector" });
        }
        let d = vector.len();
        let mut m = ComplexMatrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = vector[i] * vector[j].conj() / norm_sq;
            }
        }
        Ok(Self { m })
    }

    /// Maximally mixed state I/D.
    pub fn maximally_mixed(dim: usize) -> Self {
        Self { m: ComplexMatrix::identity(dim).scale_re(1.0 / dim as f64) }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.m
    }

    pub fn dim(&self) -> usize {
        self.m.dim()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue_hermitian(&self.m)
    }

    /// <v| rho |v> for a unit vector.
    pub fn fidelity(&self, v: &[Complex64]) -> f64 {
        let d = self.dim();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                acc += v[i].conj() * self.m[(i, j)] * v[j];
            }
        }
        acc.re
    }

    pub fn purity(&self) -> f64 {
        self.m.matmul(&self.m).trace().re
    }
}

/// Qubit density matrix in (p, u) form:
///
/// ```text
/// rho = [ p       u     ]
///       [ conj(u) 1 - p ]
/// ```
///
/// with p the population of |+>_z (basis index 0) and u the coherence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitState {
    pub p: f64,
    pub u: Complex64,
}

impl QubitState {
    pub fn new(p: f64, u: Complex64) -> Result<Self> {
        if !p.is_finite() || !u.re.is_finite() || !u.im.is_finite() {
            return Err(Error::NonFinite { context: "qubit state" });
        }
        if !(-PURITY_TOL..=1.0 + PURITY_TOL).contains(&p) {
            return Err(Error::PopulationOutOfRange { p });
        }
        let bound = p.clamp(0.0, 1.0) * (1.0 - p.clamp(0.0, 1.0));
        if u.norm_sqr() > bound + PURITY_TOL {
            return Err(Error::PurityViolation { u_sq: u.norm_sqr(), bound });
        }
        Ok(Self { p: p.clamp(0.0, 1.0), u })
    }

    pub fn diagonal(p: f64) -> Result<Self> {
        Self::new(p, Complex64::new(0.0, 0.0))
    }
}

/// QubitState -> 2x2 density matrix.
pub fn to_density(q: &QubitState) -> DensityMatrix {
    let mut m = ComplexMatrix::zeros(2);
    m[(0, 0)] = Complex64::new(q.p, 0.0);
    m[(0, 1)] = q.u;
    m[(1, 0)] = q.u.conj();
    m[(1, 1)] = Complex64::new(1.0 - q.p, 0.0);
    DensityMatrix { m }
}

/// 2x2 density matrix -> QubitState; p = <+|rho|+>_z.
pub fn from_density(rho: &DensityMatrix) -> Result<QubitState> {
    if rho.dim() != 2 {
        return Err(Error::DimensionMismatch { left: rho.dim(), right: 2 });
    }
    QubitState::new(rho.m[(0, 0)].re, rho.m[(0, 1)])
}

/// Hermitian collapse operator with its eigendecomposition. The jump-rate
/// formula requires pairwise distinct eigenvalues, so the constructor rejects
/// degeneracy. Eigenvalues are ascending; "pointer k" refers to that order.
#[derive(Debug, Clone)]
pub struct CollapseOperator {
    matrix: ComplexMatrix,
    eigen: EigenDecomposition,
    min_gap: f64,
}

impl CollapseOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let dev = matrix.hermiticity_deviation();
        if dev > HERMITICITY_TOL {
            return Err(Error::NotHermitian { deviation: dev, tolerance: HERMITICITY_TOL });
        }
        let eigen = eigen_hermitian(&matrix)?;
        let mut min_gap = f64::INFINITY;
        for w in eigen.values.windows(2) {
            min_gap = min_gap.min((w[1] - w[0]).abs());
        }
        if matrix.dim() > 1 && min_gap < 1e-9 {
            return Err(Error::DegenerateEigenvalues { gap: min_gap });
        }
        Ok(Self { matrix, eigen, min_gap })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Eigenvalues nu_k, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.values
    }

    /// Orthonormal eigenvectors as columns, matching `eigenvalues` order.
    pub fn eigenvectors(&self) -> &ComplexMatrix {
        &self.eigen.vectors
    }

    pub fn pointer(&self, k: usize) -> Vec<Complex64> {
        self.eigen.vector(k)
    }

    pub fn min_eigenvalue_gap(&self) -> f64 {
        self.min_gap
    }

    /// Pointer populations <k|rho|k> for all k.
    pub fn pointer_fidelities(&self, rho: &DensityMatrix) -> Vec<f64> {
        (0..self.dim()).map(|k| rho.fidelity(&self.pointer(k))).collect()
    }
}

// ---------------------------------------------------------------------------
// Superoperators
// ---------------------------------------------------------------------------

/// D[O](rho) = O rho O† - 1/2 {O†O, rho}
pub fn lindblad_dissipator(op: &ComplexMatrix, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    if op.dim() != rho.dim() {
        return Err(Error::DimensionMismatch { left: op.dim(), right: rho.dim() });
    }
    let op_dag = op.adjoint();
    let sandwich = op.matmul(rho).matmul(&op_dag);
    let op_dag_op = op_dag.matmul(op);
    Ok(sandwich.sub(&op_dag_op.anticommutator(rho).scale_re(0.5)))
}

/// H[O](rho) = O rho + rho O† - tr[(O+O†) rho] rho
pub fn innovation_superop(op: &ComplexMatrix, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    if op.dim() != rho.dim() {
        return Err(Error::DimensionMismatch { left: op.dim(), right: rho.dim() });
    }
    let op_dag = op.adjoint();
    let sym = op.matmul(rho).add(&rho.matmul(&op_dag));
    let expectation = op.add(&op_dag).matmul(rho).trace().re;
    Ok(sym.sub(&rho.scale_re(expectation)))
}

/// tr[(O+O†) rho]; the measurement signal drift in the diffusive record.
pub fn measurement_expectation(op: &ComplexMatrix, rho: &ComplexMatrix) -> f64 {
    op.add(&op.adjoint()).matmul(rho).trace().re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{lower_from_plus, sigma_x, sigma_z};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn half_sigma_z() -> ComplexMatrix {
        sigma_z().scale_re(0.5)
    }

    #[test]
    fn dissipator_commuting_state_is_dark() {
        // O = sigma_z/2, rho diagonal: [O, rho] = 0 so D[O](rho) = 0.
        let rho = to_density(&QubitState::diagonal(0.3).unwrap());
        let d = lindblad_dissipator(&half_sigma_z(), rho.matrix()).unwrap();
        assert!(d.max_abs() < 1e-15);
    }

    #[test]
    fn dissipator_plus_state() {
        // D[sigma_z/2](|+x><+x|) = 1/4 (sigma_z rho sigma_z - rho) = [[0,-1/4],[-1/4,0]]
        let rho = DensityMatrix::pure(&[c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        let d = lindblad_dissipator(&half_sigma_z(), rho.matrix()).unwrap();
        let mut expected = ComplexMatrix::zeros(2);
        expected[(0, 1)] = c(-0.25, 0.0);
        expected[(1, 0)] = c(-0.25, 0.0);
        assert!(d.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn dissipator_ground_state_dark_under_decay() {
        // decay channel out of |+>: the target state |-> is dark
        let rho = DensityMatrix::basis_state(2, 1);
        let op = lower_from_plus().scale_re(3.0_f64.sqrt());
        let d = lindblad_dissipator(&op, rho.matrix()).unwrap();
        assert!(d.max_abs() < 1e-15);
    }

    #[test]
    fn innovation_pointer_state_is_fixed() {
        let rho = DensityMatrix::basis_state(2, 0);
        let h = innovation_superop(&half_sigma_z(), rho.matrix()).unwrap();
        assert!(h.max_abs() < 1e-15);
    }

    #[test]
    fn innovation_maximally_mixed() {
        // H[sigma_z/2](I/2) = diag(1/2, -1/2)
        let rho = DensityMatrix::maximally_mixed(2);
        let h = innovation_superop(&half_sigma_z(), rho.matrix()).unwrap();
        let expected = ComplexMatrix::diag(&[0.5, -0.5]);
        assert!(h.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn innovation_general_qubit_form() {
        // H[sigma_z/2] on (p, u): diagonal 2p(1-p)·(±1), off-diagonal -(2p-1)u
        let p = 0.3;
        let u = c(0.1, 0.2);
        let rho = to_density(&QubitState::new(p, u).unwrap());
        let h = innovation_superop(&half_sigma_z(), rho.matrix()).unwrap();
        assert!((h[(0, 0)].re - 2.0 * p * (1.0 - p)).abs() < 1e-14);
        assert!((h[(1, 1)].re + 2.0 * p * (1.0 - p)).abs() < 1e-14);
        let expected_u = -(2.0 * p - 1.0) * u;
        assert!((h[(0, 1)] - expected_u).norm() < 1e-14);
    }

    #[test]
    fn superops_traceless_and_hermitian() {
        let rho = to_density(&QubitState::new(0.62, c(0.21, -0.13)).unwrap());
        for op in [half_sigma_z(), sigma_x(), lower_from_plus()] {
            let d = lindblad_dissipator(&op, rho.matrix()).unwrap();
            let h = innovation_superop(&op, rho.matrix()).unwrap();
            assert!(d.trace().norm() < 1e-12);
            assert!(h.trace().norm() < 1e-12);
            assert!(d.hermiticity_deviation() < 1e-12);
            assert!(h.hermiticity_deviation() < 1e-12);
        }
    }

    #[test]
    fn qubit_round_trip() {
        let q = QubitState::new(0.3, c(0.1, 0.2)).unwrap();
        let rho = to_density(&q);
        assert!((rho.matrix()[(0, 0)].re - 0.3).abs() < 1e-15);
        assert!((rho.matrix()[(0, 1)] - c(0.1, 0.2)).norm() < 1e-15);
        assert!((rho.matrix()[(1, 1)].re - 0.7).abs() < 1e-15);
        let back = from_density(&rho).unwrap();
        assert!((back.p - q.p).abs() < 1e-14);
        assert!((back.u - q.u).norm() < 1e-14);
    }

    #[test]
    fn plus_x_state_components() {
        // rho = (I + sigma_x)/2 -> (p, u) = (0.5, 0.5)
        let m = ComplexMatrix::identity(2).add(&sigma_x()).scale_re(0.5);
        let q = from_density(&DensityMatrix::new(m).unwrap()).unwrap();
        assert!((q.p - 0.5).abs() < 1e-14);
        assert!((q.u - c(0.5, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn pure_basis_round_trip() {
        let q = QubitState::new(1.0, c(0.0, 0.0)).unwrap();
        let rho = to_density(&q);
        assert!(rho.matrix().max_abs_diff(DensityMatrix::basis_state(2, 0).matrix()) < 1e-15);
    }

    #[test]
    fn qubit_state_rejects_purity_violation() {
        assert!(QubitState::new(0.9, c(0.4, 0.0)).is_err());
        assert!(QubitState::new(1.2, c(0.0, 0.0)).is_err());
    }

    #[test]
    fn density_matrix_validation() {
        // negative eigenvalue beyond tolerance
        let m = ComplexMatrix::diag(&[1.1, -0.1]);
        assert!(DensityMatrix::new(m.clone()).is_err());
        // but the integrator-path constructor accepts it (hermitian, trace 1)
        assert!(DensityMatrix::hermitian_unit_trace(m).is_ok());
    }

    #[test]
    fn collapse_operator_eigensystem() {
        let op = CollapseOperator::new(half_sigma_z()).unwrap();
        assert!((op.eigenvalues()[0] + 0.5).abs() < 1e-14);
        assert!((op.eigenvalues()[1] - 0.5).abs() < 1e-14);
        // pointer 0 is |->_z, pointer 1 is |+>_z
        let rho = to_density(&QubitState::diagonal(0.8).unwrap());
        let f = op.pointer_fidelities(&rho);
        assert!((f[0] - 0.2).abs() < 1e-12);
        assert!((f[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn collapse_operator_rejects_degeneracy() {
        assert!(CollapseOperator::new(ComplexMatrix::diag(&[0.5, 0.5])).is_err());
        assert!(CollapseOperator::new(ComplexMatrix::identity(3)).is_err());
    }

    #[test]
    fn innovation_vanishes_on_every_pointer() {
        let op = CollapseOperator::new(ComplexMatrix::diag(&[-1.0, 0.25, 2.0])).unwrap();
        for k in 0..3 {
            let rho = DensityMatrix::pure(&op.pointer(k)).unwrap();
            let h = innovation_superop(op.matrix(), rho.matrix()).unwrap();
            assert!(h.max_abs() < 1e-12, "pointer {k} not fixed");
        }
    }
}
