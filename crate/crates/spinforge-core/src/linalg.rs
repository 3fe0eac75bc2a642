//! Dense complex linear algebra for small operator matrices.
//!
//! All operators, propagators, and gradients in the crate live in
//! [`ComplexMatrix`], a row-major square matrix of `Complex64`. Generators are
//! Hermitian by construction, so the matrix exponential goes through a
//! Hermitian eigendecomposition; the same decomposition yields the Fréchet
//! derivative of the exponential through divided differences of the
//! eigenvalue phases.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Frobenius tolerance for hermiticity/unitarity checks.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Eigenvalue gap below which the divided difference switches to its limit.
pub const DEGENERACY_TOL: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl ComplexMatrix {
    /// Build from row-major entries; `entries.len()` must be `dim * dim`.
    pub fn new(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: entries.len() });
        }
        Ok(Self { dim, entries })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = ONE;
        }
        m
    }

    /// Convenience constructor from real row-major entries.
    pub fn from_real(dim: usize, entries: &[f64]) -> Result<Self> {
        Self::new(dim, entries.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.entries[row * self.dim + col] = value;
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.entries[i * self.dim + i]).sum()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.entries[j * n + i] = self.entries[i * n + j].conj();
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect();
        Self { dim: self.dim, entries }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| a - b).collect();
        Self { dim: self.dim, entries }
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self { dim: self.dim, entries: self.entries.iter().map(|a| a * factor).collect() }
    }

    /// `self += factor * other`, in place.
    pub fn axpy(&mut self, factor: f64, other: &Self) {
        assert_eq!(self.dim, other.dim);
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            *a += factor * b;
        }
    }

    /// Matrix product `self * other`.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = vec![ZERO; n * n];
        for i in 0..n {
            let a_row = &self.entries[i * n..(i + 1) * n];
            let out_row = &mut out[i * n..(i + 1) * n];
            for (k, &aik) in a_row.iter().enumerate() {
                let b_row = &other.entries[k * n..(k + 1) * n];
                for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                    *o += aik * bkj;
                }
            }
        }
        Self { dim: n, entries: out }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Frobenius inner product `Tr(self† other)`.
    pub fn frobenius_inner(&self, other: &Self) -> Complex64 {
        assert_eq!(self.dim, other.dim);
        self.entries.iter().zip(&other.entries).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.frobenius_distance(&self.adjoint()) <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let gram = self.adjoint().mul(self);
        gram.frobenius_distance(&Self::identity(self.dim)) <= tol
    }

    /// Hermitian eigendecomposition `self = V diag(λ) V†`, eigenvalues
    /// ascending, `V` unitary.
    pub fn herm_eig(&self) -> Result<HermitianEigen> {
        if !self.is_hermitian(HERMITIAN_TOL) {
            return Err(Error::NotHermitian);
        }
        let n = self.dim;
        // Symmetrize away round-off before handing to the solver.
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            0.5 * (self.entries[i * n + j] + self.entries[j * n + i].conj())
        });
        let eig = m.symmetric_eigen();

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());

        let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let mut vectors = Self::zeros(n);
        for (col, &k) in order.iter().enumerate() {
            for row in 0..n {
                vectors.entries[row * n + col] = eig.eigenvectors[(row, k)];
            }
        }
        Ok(HermitianEigen { eigenvalues, vectors })
    }
}

/// Kronecker product with the first factor as the most-significant subsystem:
/// `(a ⊗ b)[i·m + k, j·m + l] = a[i,j] · b[k,l]` for `m = b.dim`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (na, nb) = (a.dim, b.dim);
    let n = na * nb;
    let mut out = ComplexMatrix::zeros(n);
    for i in 0..na {
        for j in 0..na {
            let aij = a.entries[i * na + j];
            if aij == ZERO {
                continue;
            }
            for k in 0..nb {
                for l in 0..nb {
                    out.entries[(i * nb + k) * n + (j * nb + l)] = aij * b.entries[k * nb + l];
                }
            }
        }
    }
    out
}

/// `exp(-i·tau·h)` for Hermitian `h`, via the eigendecomposition.
pub fn expm_antiherm(h: &ComplexMatrix, tau: f64) -> Result<ComplexMatrix> {
    Ok(h.herm_eig()?.exp_propagator(tau))
}

/// Directional derivative of `X ↦ exp(X)` at `X = -i·tau·h` in direction
/// `E = -i·tau·e`, for Hermitian `h` and `e`.
pub fn expm_frechet(h: &ComplexMatrix, e: &ComplexMatrix, tau: f64) -> Result<ComplexMatrix> {
    h.herm_eig()?.exp_frechet(e, tau)
}

/// Eigendecomposition of a Hermitian matrix, shared between the forward
/// exponential and its Fréchet derivative.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub eigenvalues: Vec<f64>,
    /// Columns are the eigenvectors, in eigenvalue order.
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    /// `exp(-i·tau·H) = V diag(e^{-i·tau·λ}) V†`.
    pub fn exp_propagator(&self, tau: f64) -> ComplexMatrix {
        let n = self.vectors.dim;
        let phases: Vec<Complex64> =
            self.eigenvalues.iter().map(|&l| Complex64::from_polar(1.0, -tau * l)).collect();
        // (V · diag(phases)) · V†
        let mut scaled = self.vectors.clone();
        for row in 0..n {
            for col in 0..n {
                scaled.entries[row * n + col] *= phases[col];
            }
        }
        scaled.mul(&self.vectors.adjoint())
    }

    /// Fréchet derivative of the exponential along a Hermitian direction `e`:
    /// in the eigenbasis, entry `(i,j)` of `V† e V` is multiplied by the
    /// divided difference of `λ ↦ e^{-i·tau·λ}`, written in the
    /// cancellation-free form
    /// `-i·tau · e^{-i·tau·(λ_i+λ_j)/2} · sinc(tau·(λ_i-λ_j)/2)`,
    /// whose `|λ_i-λ_j| → 0` limit is the Daleckii-Krein value
    /// `-i·tau·e^{-i·tau·λ_i}`.
    pub fn exp_frechet(&self, e: &ComplexMatrix, tau: f64) -> Result<ComplexMatrix> {
        if !e.is_hermitian(HERMITIAN_TOL) {
            return Err(Error::NotHermitian);
        }
        let n = self.vectors.dim;
        if e.dim != n {
            return Err(Error::DimensionMismatch { expected: n, got: e.dim });
        }
        let v_dag = self.vectors.adjoint();
        let mut tilde = v_dag.mul(e).mul(&self.vectors);
        for i in 0..n {
            let li = self.eigenvalues[i];
            for j in 0..n {
                let lj = self.eigenvalues[j];
                let mean_phase = Complex64::from_polar(1.0, -tau * 0.5 * (li + lj));
                let g = Complex64::new(0.0, -tau) * mean_phase * sinc(tau * 0.5 * (li - lj));
                tilde.entries[i * n + j] *= g;
            }
        }
        Ok(self.vectors.mul(&tilde).mul(&v_dag))
    }
}

/// `sin(x)/x`, continuous through zero.
#[inline]
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{self, pauli_x, pauli_y, pauli_z};

    #[test]
    fn kron_identity_case() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(kron(&i2, &i2), ComplexMatrix::identity(4));
    }

    #[test]
    fn kron_sigma_z_identity() {
        let m = kron(&pauli_z(), &ComplexMatrix::identity(2));
        let expected = ComplexMatrix::from_real(4, &[
            1.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, -1.0, 0.0,
            0.0, 0.0, 0.0, -1.0,
        ])
        .unwrap();
        assert!(m.frobenius_distance(&expected) < 1e-15);
    }

    #[test]
    fn kron_matches_entrywise_oracle() {
        let m = kron(&pauli_x(), &pauli_y());
        let expected = testkit::kron_oracle(&pauli_x(), &pauli_y());
        assert!(m.frobenius_distance(&expected) < 1e-15);
    }

    #[test]
    fn kron_associativity() {
        let mut rng = testkit::TestRng::new(31);
        for _ in 0..10 {
            let a = testkit::random_matrix(2, &mut rng);
            let b = testkit::random_matrix(3, &mut rng);
            let c = testkit::random_matrix(2, &mut rng);
            let left = kron(&kron(&a, &b), &c);
            let right = kron(&a, &kron(&b, &c));
            assert!(left.frobenius_distance(&right) < 1e-12);
        }
    }

    #[test]
    fn herm_eig_pauli_spectrum() {
        let eig = pauli_z().herm_eig().unwrap();
        assert!((eig.eigenvalues[0] + 1.0).abs() < 1e-12);
        assert!((eig.eigenvalues[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn herm_eig_identity() {
        let eig = ComplexMatrix::identity(8).herm_eig().unwrap();
        for l in &eig.eigenvalues {
            assert!((l - 1.0).abs() < 1e-12);
        }
        assert!(eig.vectors.is_unitary(1e-10));
    }

    #[test]
    fn herm_eig_reconstruction() {
        let mut rng = testkit::TestRng::new(7);
        let h = testkit::random_hermitian(8, &mut rng);
        let eig = h.herm_eig().unwrap();
        assert!(eig.vectors.is_unitary(1e-10));
        // ascending order
        for w in eig.eigenvalues.windows(2) {
            assert!(w[0] <= w[1]);
        }
        // V diag(λ) V† reconstructs h
        let n = h.dim();
        let mut scaled = eig.vectors.clone();
        for row in 0..n {
            for col in 0..n {
                let v = scaled.get(row, col) * eig.eigenvalues[col];
                scaled.set(row, col, v);
            }
        }
        let recon = scaled.mul(&eig.vectors.adjoint());
        assert!(recon.frobenius_distance(&h) < 1e-9);
    }

    #[test]
    fn herm_eig_rejects_non_hermitian() {
        let mut m = ComplexMatrix::zeros(2);
        m.set(0, 1, Complex64::new(1.0, 0.0));
        assert_eq!(m.herm_eig().unwrap_err(), Error::NotHermitian);
    }

    #[test]
    fn expm_zero_generator() {
        let u = expm_antiherm(&ComplexMatrix::zeros(4), 0.7).unwrap();
        assert!(u.frobenius_distance(&ComplexMatrix::identity(4)) < 1e-12);
    }

    #[test]
    fn expm_sigma_x_quarter_turn() {
        // exp(-i (π/2) σx) = -i σx
        let u = expm_antiherm(&pauli_x(), std::f64::consts::FRAC_PI_2).unwrap();
        let expected = pauli_x().scale(Complex64::new(0.0, -1.0));
        assert!(u.frobenius_distance(&expected) < 1e-12);
    }

    #[test]
    fn expm_matches_taylor_oracle() {
        let mut rng = testkit::TestRng::new(19);
        let h = testkit::random_hermitian(8, &mut rng);
        let u = expm_antiherm(&h, 0.1).unwrap();
        let oracle = testkit::taylor_expm(&h, 0.1);
        assert!(u.frobenius_distance(&oracle) < 1e-10);
    }

    #[test]
    fn expm_is_unitary_and_composes() {
        let mut rng = testkit::TestRng::new(23);
        for _ in 0..20 {
            let h = testkit::random_hermitian(4, &mut rng);
            let (a, b) = (0.3, -0.8);
            let ua = expm_antiherm(&h, a).unwrap();
            assert!(ua.adjoint().mul(&ua).frobenius_distance(&ComplexMatrix::identity(4)) < 1e-10);
            let ub = expm_antiherm(&h, b).unwrap();
            let uab = expm_antiherm(&h, a + b).unwrap();
            assert!(ua.mul(&ub).frobenius_distance(&uab) < 1e-9);
        }
    }

    #[test]
    fn frechet_zero_direction() {
        let mut rng = testkit::TestRng::new(5);
        let h = testkit::random_hermitian(4, &mut rng);
        let l = expm_frechet(&h, &ComplexMatrix::zeros(4), 0.4).unwrap();
        assert!(l.frobenius_norm() < 1e-12);
    }

    #[test]
    fn frechet_commuting_case() {
        // e = h: derivative is exp(-i tau h)·(-i tau h)
        let mut rng = testkit::TestRng::new(13);
        let h = testkit::random_hermitian(4, &mut rng);
        let tau = 0.35;
        let l = expm_frechet(&h, &h, tau).unwrap();
        let expected = expm_antiherm(&h, tau).unwrap().mul(&h.scale(Complex64::new(0.0, -tau)));
        assert!(l.frobenius_distance(&expected) < 1e-10);
    }

    #[test]
    fn frechet_matches_finite_difference() {
        let mut rng = testkit::TestRng::new(29);
        for _ in 0..5 {
            let h = testkit::random_hermitian(8, &mut rng);
            let e = testkit::random_hermitian(8, &mut rng);
            let tau = 0.2;
            let l = expm_frechet(&h, &e, tau).unwrap();
            let fd = testkit::frechet_fd_oracle(&h, &e, tau, 1e-6);
            let rel = l.frobenius_distance(&fd) / fd.frobenius_norm().max(1e-300);
            assert!(rel < 1e-6, "relative error {rel}");
        }
    }

    #[test]
    fn frechet_handles_degenerate_eigenvalues() {
        // σz ⊗ I has doubly degenerate eigenvalues ±1.
        let h = kron(&pauli_z(), &ComplexMatrix::identity(2));
        let mut rng = testkit::TestRng::new(37);
        let e = testkit::random_hermitian(4, &mut rng);
        let tau = 0.6;
        let l = expm_frechet(&h, &e, tau).unwrap();
        let fd = testkit::frechet_fd_oracle(&h, &e, tau, 1e-6);
        let rel = l.frobenius_distance(&fd) / fd.frobenius_norm();
        assert!(rel < 1e-6, "relative error {rel}");
    }

    #[test]
    fn frechet_linear_in_direction() {
        let mut rng = testkit::TestRng::new(41);
        let h = testkit::random_hermitian(4, &mut rng);
        let e1 = testkit::random_hermitian(4, &mut rng);
        let e2 = testkit::random_hermitian(4, &mut rng);
        let tau = 0.5;
        let sum = expm_frechet(&h, &e1.add(&e2), tau).unwrap();
        let parts =
            expm_frechet(&h, &e1, tau).unwrap().add(&expm_frechet(&h, &e2, tau).unwrap());
        assert!(sum.frobenius_distance(&parts) < 1e-9);
    }
}
