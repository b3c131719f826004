//! Dense complex matrices for small Hilbert spaces (D <= ~16).
//!
//! Everything is implemented directly on row-major `Vec<Complex64>` storage;
//! there is no sparse path and no external linear-algebra backend. The
//! Hermitian eigensolver is a cyclic Jacobi iteration with a deterministic
//! ordering convention so that repeated runs produce identical output.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HERMITICITY_TOL: f64 = 1e-12;
pub const EIGEN_RECONSTRUCTION_TOL: f64 = 1e-10;

/// Square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be >= 1");
        Self {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// Build from row-major complex entries; rejects non-finite values.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidParameter {
                name: "rows",
                message: "matrix must be square with dim >= 1".into(),
            });
        }
        let data: Vec<Complex64> = rows.iter().flatten().copied().collect();
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite { context: "matrix entries" });
        }
        Ok(Self { dim, data })
    }

    /// Real diagonal matrix.
    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out[(i, j)] = self[(j, i)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim, "matmul dimension mismatch");
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self[(i, k)];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for j in 0..d {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim);
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(rhs.data.iter()) {
            *a += *b;
        }
        out
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim);
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(rhs.data.iter()) {
            *a -= *b;
        }
        out
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= c;
        }
        out
    }

    pub fn scale_re(&self, c: f64) -> Self {
        self.scale(Complex64::new(c, 0.0))
    }

    pub fn add_assign_scaled(&mut self, rhs: &Self, c: Complex64) {
        assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a += c * *b;
        }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    /// [A, B] = AB - BA
    pub fn commutator(&self, rhs: &Self) -> Self {
        self.matmul(rhs).sub(&rhs.matmul(self))
    }

    /// {A, B} = AB + BA
    pub fn anticommutator(&self, rhs: &Self) -> Self {
        self.matmul(rhs).add(&rhs.matmul(self))
    }

    /// max_ij |a_ij - b_ij|
    pub fn max_abs_diff(&self, rhs: &Self) -> f64 {
        assert_eq!(self.dim, rhs.dim);
        self.data
            .iter()
            .zip(rhs.data.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn copy_from(&mut self, other: &Self) {
        assert_eq!(self.dim, other.dim);
        self.data.copy_from_slice(&other.data);
    }

    pub fn zero_assign(&mut self) {
        self.data.fill(Complex64::new(0.0, 0.0));
    }

    pub fn scale_assign(&mut self, c: f64) {
        for a in self.data.iter_mut() {
            *a *= c;
        }
    }

    /// self += c (X + X†)
    pub fn add_scaled_plus_adjoint(&mut self, x: &Self, c: Complex64) {
        assert_eq!(self.dim, x.dim);
        let d = self.dim;
        for i in 0..d {
            for j in 0..d {
                self[(i, j)] += c * (x[(i, j)] + x[(j, i)].conj());
            }
        }
    }

    pub fn hermitize_in_place(&mut self) {
        let d = self.dim;
        for i in 0..d {
            for j in (i + 1)..d {
                let avg = (self[(i, j)] + self[(j, i)].conj()) * 0.5;
                self[(i, j)] = avg;
                self[(j, i)] = avg.conj();
            }
            let re = self[(i, i)].re;
            self[(i, i)] = Complex64::new(re, 0.0);
        }
    }

    /// max_ij |m_ij - conj(m_ji)|
    pub fn hermiticity_deviation(&self) -> f64 {
        let d = self.dim;
        let mut dev: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                dev = dev.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        dev
    }

    /// (m + m†)/2
    pub fn hermitized(&self) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out[(i, j)] = (self[(i, j)] + self[(j, i)].conj()) * 0.5;
            }
        }
        out
    }
}

/// out = a b (no allocation)
pub fn matmul_into(out: &mut ComplexMatrix, a: &ComplexMatrix, b: &ComplexMatrix) {
    let d = a.dim();
    assert!(d == b.dim() && d == out.dim());
    for z in out.data.iter_mut() {
        *z = Complex64::new(0.0, 0.0);
    }
    for i in 0..d {
        for k in 0..d {
            let av = a[(i, k)];
            if av.re == 0.0 && av.im == 0.0 {
                continue;
            }
            for j in 0..d {
                out[(i, j)] += av * b[(k, j)];
            }
        }
    }
}

/// out += w · a b†
pub fn matmul_bdagger_acc(out: &mut ComplexMatrix, a: &ComplexMatrix, b: &ComplexMatrix, w: Complex64) {
    let d = a.dim();
    assert!(d == b.dim() && d == out.dim());
    for i in 0..d {
        for j in 0..d {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..d {
                acc += a[(i, k)] * b[(j, k)].conj();
            }
            out[(i, j)] += w * acc;
        }
    }
}

/// tr(a b)
pub fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    let d = a.dim();
    assert_eq!(d, b.dim());
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..d {
        for k in 0..d {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

// ---------------------------------------------------------------------------
// Pauli matrices and common qubit operators (basis: index 0 = |+>_z, 1 = |->_z)
// ---------------------------------------------------------------------------

pub fn sigma_x() -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(2);
    m[(0, 1)] = Complex64::new(1.0, 0.0);
    m[(1, 0)] = Complex64::new(1.0, 0.0);
    m
}

pub fn sigma_y() -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(2);
    m[(0, 1)] = Complex64::new(0.0, -1.0);
    m[(1, 0)] = Complex64::new(0.0, 1.0);
    m
}

pub fn sigma_z() -> ComplexMatrix {
    ComplexMatrix::diag(&[1.0, -1.0])
}

/// |+><-|: moves population into basis state 0.
pub fn raise_to_plus() -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(2);
    m[(0, 1)] = Complex64::new(1.0, 0.0);
    m
}

/// |-><+|: moves population out of basis state 0.
pub fn lower_from_plus() -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(2);
    m[(1, 0)] = Complex64::new(1.0, 0.0);
    m
}

// ---------------------------------------------------------------------------
// Hermitian eigensolver (cyclic Jacobi)
// ---------------------------------------------------------------------------

/// Eigendecomposition of a Hermitian matrix.
///
/// Eigenvalues come out ascending; the matching eigenvectors are the columns
/// of `vectors`. Each eigenvector is phase-fixed so its largest-modulus
/// component is real and positive, and exact eigenvalue ties are broken by
/// lexicographic comparison of the vectors, which makes the output a pure
/// function of the input.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl EigenDecomposition {
    /// k-th eigenvector as a column.
    pub fn vector(&self, k: usize) -> Vec<Complex64> {
        (0..self.vectors.dim()).map(|i| self.vectors[(i, k)]).collect()
    }

    /// Reconstruct sum_k v_k |k><k|.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let d = self.vectors.dim();
        let mut m = ComplexMatrix::zeros(d);
        for k in 0..d {
            for i in 0..d {
                for j in 0..d {
                    m[(i, j)] += self.vectors[(i, k)] * self.vectors[(j, k)].conj() * self.values[k];
                }
            }
        }
        m
    }
}

pub fn eigen_hermitian(m: &ComplexMatrix) -> Result<EigenDecomposition> {
    let dev = m.hermiticity_deviation();
    let scale = m.max_abs().max(1.0);
    if dev > HERMITICITY_TOL * scale.max(1.0) * 100.0 {
        return Err(Error::NotHermitian { deviation: dev, tolerance: HERMITICITY_TOL });
    }
    let d = m.dim();
    let mut a = m.hermitized();
    let mut v = ComplexMatrix::identity(d);

    let off = |a: &ComplexMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    s += a[(i, j)].norm_sqr();
                }
            }
        }
        s
    };

    let target = 1e-30 * scale * scale;
    for _sweep in 0..60 {
        if off(&a) <= target {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[(p, q)];
                if apq.norm() <= 1e-300 {
                    continue;
                }
                // Unitary 2x2 rotation eliminating a_pq, standard complex Jacobi:
                // G = [[c, -conj(s)], [s, c]] acting on rows/columns (p, q).
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let abs_apq = apq.norm();
                let tau = (aqq - app) / (2.0 * abs_apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s_abs = t * c;
                let phase = apq / abs_apq;
                let s = phase.conj() * s_abs;

                // rows p,q of A
                for j in 0..d {
                    let ap = a[(p, j)];
                    let aq = a[(q, j)];
                    a[(p, j)] = ap * c - aq * s.conj();
                    a[(q, j)] = ap * s + aq * c;
                }
                // columns p,q of A
                for i in 0..d {
                    let ap = a[(i, p)];
                    let aq = a[(i, q)];
                    a[(i, p)] = ap * c - aq * s;
                    a[(i, q)] = ap * s.conj() + aq * c;
                }
                // accumulate eigenvectors (columns of V transform like columns of A)
                for i in 0..d {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = vp * c - vq * s;
                    v[(i, q)] = vp * s.conj() + vq * c;
                }
                a[(p, q)] = Complex64::new(0.0, 0.0);
                a[(q, p)] = Complex64::new(0.0, 0.0);
            }
        }
    }

    let mut pairs: Vec<(f64, Vec<Complex64>)> = (0..d)
        .map(|k| {
            let mut col: Vec<Complex64> = (0..d).map(|i| v[(i, k)]).collect();
            // Phase convention: largest-modulus component real positive.
            let (mut best, mut best_norm) = (0usize, -1.0f64);
            for (i, z) in col.iter().enumerate() {
                let n = z.norm();
                if n > best_norm + 1e-15 {
                    best = i;
                    best_norm = n;
                }
            }
            if best_norm > 0.0 {
                let phase = col[best] / col[best].norm();
                for z in col.iter_mut() {
                    *z /= phase;
                }
            }
            (a[(k, k)].re, col)
        })
        .collect();

    pairs.sort_by(|x, y| {
        x.0.partial_cmp(&y.0).unwrap().then_with(|| {
            for (za, zb) in x.1.iter().zip(y.1.iter()) {
                let ord = za
                    .re
                    .partial_cmp(&zb.re)
                    .unwrap()
                    .then(za.im.partial_cmp(&zb.im).unwrap());
                if ord != std::cmp::Ordering::Equal {
                    return ord;
                }
            }
            std::cmp::Ordering::Equal
        })
    });

    let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut vectors = ComplexMatrix::zeros(d);
    for (k, (_, col)) in pairs.iter().enumerate() {
        for i in 0..d {
            vectors[(i, k)] = col[i];
        }
    }
    Ok(EigenDecomposition { values, vectors })
}

/// Smallest eigenvalue of a Hermitian matrix. Closed form for 2x2.
pub fn min_eigenvalue_hermitian(m: &ComplexMatrix) -> f64 {
    if m.dim() == 2 {
        let a = m[(0, 0)].re;
        let d = m[(1, 1)].re;
        let b = m[(0, 1)];
        let mid = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        return mid - rad;
    }
    match eigen_hermitian(m) {
        Ok(e) => e.values[0],
        Err(_) => f64::NAN,
    }
}

// Serde helpers: complex matrices serialize as nested [re, im] pairs.

pub fn matrix_to_json(m: &ComplexMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.dim())
        .map(|i| (0..m.dim()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn matrix_from_json(rows: &[Vec<[f64; 2]>]) -> Result<ComplexMatrix> {
    let converted: Vec<Vec<Complex64>> = rows
        .iter()
        .map(|r| r.iter().map(|&[re, im]| Complex64::new(re, im)).collect())
        .collect();
    ComplexMatrix::from_rows(&converted)
}

#[derive(Serialize, Deserialize)]
#[serde(transparent)]
pub struct MatrixJson(pub Vec<Vec<[f64; 2]>>);

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pauli_algebra() {
        let x = sigma_x();
        let y = sigma_y();
        let z = sigma_z();
        // sigma_x sigma_y = i sigma_z
        let xy = x.matmul(&y);
        assert!(xy.max_abs_diff(&z.scale(c(0.0, 1.0))) < 1e-15);
        // squares are identity
        for s in [&x, &y, &z] {
            assert!(s.matmul(s).max_abs_diff(&ComplexMatrix::identity(2)) < 1e-15);
        }
    }

    #[test]
    fn eigen_sigma_z() {
        let e = eigen_hermitian(&sigma_z()).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        // ascending: first eigenvector is |->_z = e_1
        assert!((e.vectors[(1, 0)].re - 1.0).abs() < 1e-14);
        assert!((e.vectors[(0, 1)].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigen_sigma_x() {
        let e = eigen_hermitian(&sigma_x()).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        let inv_sqrt2 = 1.0 / 2.0_f64.sqrt();
        // eigenvectors (|+> -/+ |->)/sqrt2 up to the fixed phase convention
        for k in 0..2 {
            let v = e.vector(k);
            assert!((v[0].norm() - inv_sqrt2).abs() < 1e-12);
            assert!((v[1].norm() - inv_sqrt2).abs() < 1e-12);
        }
    }

    #[test]
    fn eigen_diag_is_canonical() {
        let vals = [3.0, -1.0, 0.5, 2.0];
        let e = eigen_hermitian(&ComplexMatrix::diag(&vals)).unwrap();
        let mut sorted = vals.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in e.values.iter().zip(sorted.iter()) {
            assert!((got - want).abs() < 1e-14);
        }
        // canonical basis vectors
        for k in 0..4 {
            let v = e.vector(k);
            let nonzero: Vec<usize> = (0..4).filter(|&i| v[i].norm() > 1e-12).collect();
            assert_eq!(nonzero.len(), 1);
            assert!((v[nonzero[0]].re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eigen_reconstructs_random_hermitian() {
        // deterministic pseudo-random Hermitian matrix
        let d = 6;
        let mut m = ComplexMatrix::zeros(d);
        let mut state = 0x12345678u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for i in 0..d {
            for j in i..d {
                if i == j {
                    m[(i, j)] = c(next(), 0.0);
                } else {
                    let z = c(next(), next());
                    m[(i, j)] = z;
                    m[(j, i)] = z.conj();
                }
            }
        }
        let e = eigen_hermitian(&m).unwrap();
        assert!(e.reconstruct().max_abs_diff(&m) < EIGEN_RECONSTRUCTION_TOL);
        // orthonormality
        let vtv = e.vectors.adjoint().matmul(&e.vectors);
        assert!(vtv.max_abs_diff(&ComplexMatrix::identity(d)) < 1e-12);
        // ascending
        for w in e.values.windows(2) {
            assert!(w[0] <= w[1] + 1e-14);
        }
    }

    #[test]
    fn eigen_rejects_non_hermitian() {
        let mut m = ComplexMatrix::zeros(2);
        m[(0, 1)] = c(1.0, 0.0);
        assert!(eigen_hermitian(&m).is_err());
    }

    #[test]
    fn min_eigenvalue_2x2_matches_solver() {
        let mut m = ComplexMatrix::zeros(2);
        m[(0, 0)] = c(0.7, 0.0);
        m[(1, 1)] = c(0.3, 0.0);
        m[(0, 1)] = c(0.2, 0.1);
        m[(1, 0)] = c(0.2, -0.1);
        let closed = min_eigenvalue_hermitian(&m);
        let full = eigen_hermitian(&m).unwrap().values[0];
        assert!((closed - full).abs() < 1e-12);
    }

    #[test]
    fn determinism() {
        let m = sigma_x();
        let a = eigen_hermitian(&m).unwrap();
        let b = eigen_hermitian(&m).unwrap();
        assert_eq!(a.values, b.values);
        assert!(a.vectors.max_abs_diff(&b.vectors) == 0.0);
    }
}
