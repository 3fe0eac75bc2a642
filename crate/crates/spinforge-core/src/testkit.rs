//! Independent reference implementations used to verify the production code.
//!
//! Everything here is deliberately written the slow, obvious way (truncated
//! Taylor series, entry-wise definitions, O(T²) transforms, central finite
//! differences) and shares no code with the paths it checks. The unit,
//! integration, and acceptance tests all lean on this module.

use num_complex::Complex64;

use crate::linalg::ComplexMatrix;

/// Small standalone xorshift generator for test fixtures.
#[derive(Debug, Clone)]
pub struct TestRng {
    state: u64,
}

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1 }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in `[-1, 1)`.
    pub fn sym(&mut self) -> f64 {
        2.0 * ((self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)) - 1.0
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }
}

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::new(2, vec![
        Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0),
        Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0),
    ])
    .unwrap()
}

pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::new(2, vec![
        Complex64::new(0.0, 0.0), Complex64::new(0.0, -1.0),
        Complex64::new(0.0, 1.0), Complex64::new(0.0, 0.0),
    ])
    .unwrap()
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::new(2, vec![
        Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0), Complex64::new(-1.0, 0.0),
    ])
    .unwrap()
}

pub fn random_matrix(dim: usize, rng: &mut TestRng) -> ComplexMatrix {
    let entries = (0..dim * dim).map(|_| Complex64::new(rng.sym(), rng.sym())).collect();
    ComplexMatrix::new(dim, entries).unwrap()
}

/// Random Hermitian matrix: `(A + A†)/2` for random `A`.
pub fn random_hermitian(dim: usize, rng: &mut TestRng) -> ComplexMatrix {
    let a = random_matrix(dim, rng);
    a.add(&a.adjoint()).scale(Complex64::new(0.5, 0.0))
}

/// Random unitary via Gram-Schmidt on a random matrix.
pub fn random_unitary(dim: usize, rng: &mut TestRng) -> ComplexMatrix {
    let a = random_matrix(dim, rng);
    let mut cols: Vec<Vec<Complex64>> = (0..dim)
        .map(|j| (0..dim).map(|i| a.get(i, j)).collect())
        .collect();
    for j in 0..dim {
        for k in 0..j {
            let proj: Complex64 =
                cols[k].iter().zip(&cols[j]).map(|(u, v)| u.conj() * v).sum();
            for i in 0..dim {
                let d = proj * cols[k][i];
                cols[j][i] -= d;
            }
        }
        let norm: f64 = cols[j].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for c in cols[j].iter_mut() {
            *c /= norm;
        }
    }
    let mut out = ComplexMatrix::zeros(dim);
    for (j, col) in cols.iter().enumerate() {
        for (i, &c) in col.iter().enumerate() {
            out.set(i, j, c);
        }
    }
    out
}

/// Entry-wise Kronecker definition: `(a⊗b)[i·m+k, j·m+l] = a[i,j]·b[k,l]`.
pub fn kron_oracle(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (na, nb) = (a.dim(), b.dim());
    let n = na * nb;
    let mut out = ComplexMatrix::zeros(n);
    for i in 0..na {
        for j in 0..na {
            for k in 0..nb {
                for l in 0..nb {
                    out.set(i * nb + k, j * nb + l, a.get(i, j) * b.get(k, l));
                }
            }
        }
    }
    out
}

/// `exp(-i·tau·h)` by a 30-term Taylor series with term-wise scaling.
pub fn taylor_expm(h: &ComplexMatrix, tau: f64) -> ComplexMatrix {
    let n = h.dim();
    let x = h.scale(Complex64::new(0.0, -tau));
    let mut sum = ComplexMatrix::identity(n);
    let mut term = ComplexMatrix::identity(n);
    for k in 1..=30 {
        term = term.mul(&x).scale(Complex64::new(1.0 / k as f64, 0.0));
        sum = sum.add(&term);
    }
    sum
}

/// Central finite-difference oracle for the Fréchet derivative:
/// `(exp(-i·tau·(h+δe)) - exp(-i·tau·(h-δe))) / (2δ)`.
pub fn frechet_fd_oracle(
    h: &ComplexMatrix,
    e: &ComplexMatrix,
    tau: f64,
    delta: f64,
) -> ComplexMatrix {
    let mut plus = h.clone();
    plus.axpy(delta, e);
    let mut minus = h.clone();
    minus.axpy(-delta, e);
    let up = taylor_expm(&plus, tau);
    let um = taylor_expm(&minus, tau);
    up.sub(&um).scale(Complex64::new(1.0 / (2.0 * delta), 0.0))
}

/// O(T²) discrete Fourier transform, textbook definition.
pub fn naive_dft(signal: &[f64]) -> Vec<Complex64> {
    let t = signal.len();
    (0..t)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (n, &x) in signal.iter().enumerate() {
                let angle = -std::f64::consts::TAU * (k as f64) * (n as f64) / (t as f64);
                acc += x * Complex64::from_polar(1.0, angle);
            }
            acc
        })
        .collect()
}

/// Spectral-penalty oracle built directly on [`naive_dft`]: power in the
/// 1/T-normalized spectrum above the cutoff bin, conjugate pairs counted
/// once with multiplicity 2 and the Nyquist bin (even T) with multiplicity 1.
pub fn spectral_penalty_oracle(phases: &[f64], cutoff_fraction: f64) -> f64 {
    let t = phases.len();
    let spectrum = naive_dft(phases);
    let half = t / 2;
    let mut acc = 0.0;
    for k in 1..=half {
        if (k as f64) <= cutoff_fraction * (t as f64) / 2.0 {
            continue;
        }
        let mult = if t % 2 == 0 && k == half { 1.0 } else { 2.0 };
        acc += mult * spectrum[k].norm_sqr() / ((t * t) as f64);
    }
    acc
}

/// Mean absolute first difference, written directly.
pub fn tv_penalty_oracle(phases: &[f64]) -> f64 {
    let t = phases.len();
    let sum: f64 = phases.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    sum / (t as f64 - 1.0)
}

/// Classical expected shortfall: the mean of the worst `ceil(alpha·n)` losses.
pub fn expected_shortfall_oracle(losses: &[f64], alpha: f64) -> f64 {
    let mut sorted = losses.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let k = ((alpha * n as f64).ceil() as usize).clamp(1, n);
    sorted[n - k..].iter().sum::<f64>() / k as f64
}

/// Central finite difference of a scalar function of one vector entry.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], i: usize, delta: f64) -> f64 {
    let mut plus = x.to_vec();
    plus[i] += delta;
    let mut minus = x.to_vec();
    minus[i] -= delta;
    (f(&plus) - f(&minus)) / (2.0 * delta)
}

/// erf(x) by its Maclaurin series; good to ~1e-14 for |x| ≤ 3, which is all
/// the GELU tests need.
pub fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    for n in 1..200 {
        let nf = n as f64;
        term *= -x * x / nf;
        let contrib = term / (2.0 * nf + 1.0);
        sum += contrib;
        if contrib.abs() < 1e-18 {
            break;
        }
    }
    sum * 2.0 / std::f64::consts::PI.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taylor_expm_of_zero_is_identity() {
        let u = taylor_expm(&ComplexMatrix::zeros(3), 0.9);
        assert!(u.frobenius_distance(&ComplexMatrix::identity(3)) < 1e-15);
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = TestRng::new(3);
        let u = random_unitary(8, &mut rng);
        assert!(u.is_unitary(1e-10));
    }

    #[test]
    fn erf_series_known_values() {
        assert!((erf_series(0.0)).abs() < 1e-16);
        // erf(1) = 0.8427007929497149
        assert!((erf_series(1.0) - 0.8427007929497149).abs() < 1e-13);
    }

    #[test]
    fn naive_dft_constant_signal() {
        let spec = naive_dft(&[2.0; 8]);
        assert!((spec[0].re - 16.0).abs() < 1e-12);
        for bin in spec.iter().skip(1) {
            assert!(bin.norm() < 1e-10);
        }
    }
}
