//! Spin-register Hamiltonians, propagators, targets, and fidelity.
//!
//! Units: frequencies and control amplitude in kHz, slice durations in ms,
//! so every product entering an exponential is a dimensionless phase. Qubit 1
//! is the most-significant Kronecker factor.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{kron, ComplexMatrix};

/// How the scalar couplings enter the drift Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingModel {
    /// Full isotropic exchange: `J·(σxσx + σyσy + σzσz)` per pair.
    Heisenberg,
    /// Secular approximation: `J·σzσz` per pair.
    Zz,
}

/// Static parameters of the spin register.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub n_qubits: usize,
    /// Local Z frequencies, kHz, one per qubit.
    pub v: Vec<f64>,
    /// Scalar couplings, kHz, keyed by strictly ordered qubit pairs (1-based).
    pub j: BTreeMap<(usize, usize), f64>,
    pub coupling_model: CouplingModel,
}

impl SystemParams {
    pub fn new(
        n_qubits: usize,
        v: Vec<f64>,
        j: BTreeMap<(usize, usize), f64>,
        coupling_model: CouplingModel,
    ) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::ConfigError("n_qubits must be at least 1".into()));
        }
        if v.len() != n_qubits {
            return Err(Error::ConfigError(format!(
                "expected {} local frequencies, got {}",
                n_qubits,
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::ConfigError("local frequencies must be finite".into()));
        }
        for (&(a, b), value) in &j {
            if a == 0 || b == 0 || a >= b || b > n_qubits {
                return Err(Error::ConfigError(format!(
                    "coupling key ({a},{b}) is not a strictly ordered 1-based pair"
                )));
            }
            if !value.is_finite() {
                return Err(Error::ConfigError(format!("coupling ({a},{b}) must be finite")));
            }
        }
        Ok(Self { n_qubits, v, j, coupling_model })
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// Copy with all local frequencies and couplings scaled by `(1 + dv)`
    /// and `(1 + dj)` respectively.
    pub fn perturbed(&self, dv: f64, dj: f64) -> Self {
        let v = self.v.iter().map(|x| (1.0 + dv) * x).collect();
        let j = self.j.iter().map(|(&k, &x)| (k, (1.0 + dj) * x)).collect();
        Self { n_qubits: self.n_qubits, v, j, coupling_model: self.coupling_model }
    }

    /// Same system under a different coupling model.
    pub fn with_coupling_model(&self, model: CouplingModel) -> Self {
        let mut out = self.clone();
        out.coupling_model = model;
        out
    }
}

/// A phase-modulated pulse: per-slice phases at constant amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    /// Per-slice phases, radians; length `t_slices`.
    pub phases: Vec<f64>,
    /// Drive amplitude, kHz.
    pub amplitude: f64,
    /// Slice duration, ms.
    pub dt: f64,
    pub t_slices: usize,
}

impl PulseSequence {
    pub fn new(phases: Vec<f64>, amplitude: f64, dt: f64) -> Result<Self> {
        if amplitude < 0.0 || !amplitude.is_finite() {
            return Err(Error::ConfigError("amplitude must be finite and >= 0".into()));
        }
        if dt <= 0.0 || !dt.is_finite() {
            return Err(Error::ConfigError("dt must be finite and > 0".into()));
        }
        let t_slices = phases.len();
        Ok(Self { phases, amplitude, dt, t_slices })
    }
}

/// Axis-angle parameters of a single-qubit target gate, radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateSpec {
    /// Rotation angle γ.
    pub gamma: f64,
    /// Polar angle θ of the rotation axis.
    pub theta: f64,
    /// Azimuthal angle α of the rotation axis.
    pub alpha: f64,
}

impl GateSpec {
    pub fn new(gamma: f64, theta: f64, alpha: f64) -> Self {
        Self { gamma, theta, alpha }
    }

    pub fn from_degrees(gamma: f64, theta: f64, alpha: f64) -> Self {
        Self::new(gamma.to_radians(), theta.to_radians(), alpha.to_radians())
    }
}

fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::new(2, vec![
        Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0),
        Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0),
    ])
    .unwrap()
}

fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::new(2, vec![
        Complex64::new(0.0, 0.0), Complex64::new(0.0, -1.0),
        Complex64::new(0.0, 1.0), Complex64::new(0.0, 0.0),
    ])
    .unwrap()
}

fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::new(2, vec![
        Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0), Complex64::new(-1.0, 0.0),
    ])
    .unwrap()
}

/// Lift a single-qubit operator onto `qubit` (1-based) of an `n`-qubit
/// register, identity elsewhere.
fn lift_single(op: &ComplexMatrix, qubit: usize, n_qubits: usize) -> ComplexMatrix {
    let mut out = ComplexMatrix::identity(1);
    for q in 1..=n_qubits {
        let factor = if q == qubit { op.clone() } else { ComplexMatrix::identity(2) };
        out = kron(&out, &factor);
    }
    out
}

/// Product of two single-qubit operators lifted onto distinct qubits.
fn lift_pair(
    op_a: &ComplexMatrix,
    qubit_a: usize,
    op_b: &ComplexMatrix,
    qubit_b: usize,
    n_qubits: usize,
) -> ComplexMatrix {
    let mut out = ComplexMatrix::identity(1);
    for q in 1..=n_qubits {
        let factor = if q == qubit_a {
            op_a.clone()
        } else if q == qubit_b {
            op_b.clone()
        } else {
            ComplexMatrix::identity(2)
        };
        out = kron(&out, &factor);
    }
    out
}

/// Collective `Σ_i σx^(i)`.
pub fn collective_x(n_qubits: usize) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(1 << n_qubits);
    let sx = pauli_x();
    for q in 1..=n_qubits {
        out.axpy(1.0, &lift_single(&sx, q, n_qubits));
    }
    out
}

/// Collective `Σ_i σy^(i)`.
pub fn collective_y(n_qubits: usize) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(1 << n_qubits);
    let sy = pauli_y();
    for q in 1..=n_qubits {
        out.axpy(1.0, &lift_single(&sy, q, n_qubits));
    }
    out
}

/// Drift Hamiltonian `H0 = π Σ v_i σz^(i) + π Σ J_ij (coupling terms)`,
/// in kHz angular units (π prefactors included).
pub fn build_drift(p: &SystemParams) -> ComplexMatrix {
    let n = p.n_qubits;
    let (sx, sy, sz) = (pauli_x(), pauli_y(), pauli_z());
    let mut h = ComplexMatrix::zeros(p.dim());
    for (q, &vi) in p.v.iter().enumerate() {
        if vi != 0.0 {
            h.axpy(std::f64::consts::PI * vi, &lift_single(&sz, q + 1, n));
        }
    }
    for (&(a, b), &jab) in &p.j {
        if jab == 0.0 {
            continue;
        }
        let coeff = std::f64::consts::PI * jab;
        h.axpy(coeff, &lift_pair(&sz, a, &sz, b, n));
        if p.coupling_model == CouplingModel::Heisenberg {
            h.axpy(coeff, &lift_pair(&sx, a, &sx, b, n));
            h.axpy(coeff, &lift_pair(&sy, a, &sy, b, n));
        }
    }
    h
}

/// Control Hamiltonian `A (cos φ · Hx + sin φ · Hy)` with collective Hx, Hy.
pub fn build_control(phase: f64, amplitude: f64, n_qubits: usize) -> ComplexMatrix {
    let mut h = collective_x(n_qubits).scale(Complex64::new(amplitude * phase.cos(), 0.0));
    h.axpy(amplitude * phase.sin(), &collective_y(n_qubits));
    h
}

/// Time-ordered propagator over per-slice (amplitude, phase, duration)
/// triples: slice 0 acts first (rightmost factor). This is the single slice
/// engine shared by nominal and scenario propagation.
pub(crate) fn propagate_controls(
    drift: &ComplexMatrix,
    n_qubits: usize,
    amplitudes: &[f64],
    phases: &[f64],
    durations: &[f64],
) -> Result<ComplexMatrix> {
    debug_assert_eq!(amplitudes.len(), phases.len());
    debug_assert_eq!(amplitudes.len(), durations.len());
    let hx = collective_x(n_qubits);
    let hy = collective_y(n_qubits);
    let mut u = ComplexMatrix::identity(drift.dim());
    let mut h = ComplexMatrix::zeros(drift.dim());
    for ((&a, &phi), &dt) in amplitudes.iter().zip(phases).zip(durations) {
        h.clone_from(drift);
        h.axpy(a * phi.cos(), &hx);
        h.axpy(a * phi.sin(), &hy);
        let slice = h.herm_eig()?.exp_propagator(dt);
        u = slice.mul(&u);
    }
    Ok(u)
}

/// Time-ordered propagator of the pulse under the nominal system.
pub fn propagate(p: &SystemParams, pulse: &PulseSequence) -> Result<ComplexMatrix> {
    let drift = build_drift(p);
    let amps = vec![pulse.amplitude; pulse.t_slices];
    let dts = vec![pulse.dt; pulse.t_slices];
    propagate_controls(&drift, p.n_qubits, &amps, &pulse.phases, &dts)
}

/// Axis-angle single-qubit unitary:
/// `cos(γ/2)·I - i·sin(γ/2)·(nx σx + ny σy + nz σz)` with
/// `n = (sinθ cosα, sinθ sinα, cosθ)`.
pub fn target_su2(g: &GateSpec) -> ComplexMatrix {
    let (c, s) = ((0.5 * g.gamma).cos(), (0.5 * g.gamma).sin());
    let nx = g.theta.sin() * g.alpha.cos();
    let ny = g.theta.sin() * g.alpha.sin();
    let nz = g.theta.cos();
    let mi = Complex64::new(0.0, -s);
    ComplexMatrix::new(2, vec![
        Complex64::new(c, 0.0) + mi * nz,
        mi * Complex64::new(nx, -ny),
        mi * Complex64::new(nx, ny),
        Complex64::new(c, 0.0) - mi * nz,
    ])
    .unwrap()
}

/// Lift a 2×2 unitary onto qubit 1 of an `n`-qubit register.
pub fn lift_target(u2: &ComplexMatrix, n_qubits: usize) -> Result<ComplexMatrix> {
    if u2.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: u2.dim() });
    }
    Ok(kron(u2, &ComplexMatrix::identity(1 << (n_qubits - 1))))
}

/// Full-register target for a gate spec.
pub fn gate_target(g: &GateSpec, n_qubits: usize) -> ComplexMatrix {
    lift_target(&target_su2(g), n_qubits).expect("target_su2 is 2x2")
}

/// Global-phase-insensitive unitary fidelity `|Tr(U_target† U)|² / d²`.
pub fn fidelity(u_target: &ComplexMatrix, u: &ComplexMatrix) -> Result<f64> {
    if u_target.dim() != u.dim() {
        return Err(Error::DimensionMismatch { expected: u_target.dim(), got: u.dim() });
    }
    let d = u.dim() as f64;
    let z = u_target.frobenius_inner(u);
    Ok(z.norm_sqr() / (d * d))
}
