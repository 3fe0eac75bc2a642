//! Exact gradients of the fidelity loss with respect to per-slice controls.
//!
//! The loss is `ℓ = 1 - |Tr(U_target† U)|²/d²` with `U` the time-ordered
//! product of per-slice exponentials. Differentiating one slice inserts the
//! Fréchet derivative of that slice's exponential between the running
//! products to its left and right; the trace then chains through the
//! squared-modulus fidelity as `dF = (2/d²)·Re(conj(z)·Tr(U_target† dU))`.
//! All slice unitaries and both running-product sequences are kept, so the
//! backward sweep recomputes nothing.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, HermitianEigen};
use crate::physics::{self, PulseSequence, SystemParams};
use crate::uncertainty::{self, Scenario};

/// Forward-pass record: per-slice unitaries, running products from both ends,
/// and the final propagator.
#[derive(Debug, Clone)]
pub struct GradientTape {
    /// `U_t` for each slice (slice 0 acts first).
    pub slice_unitaries: Vec<ComplexMatrix>,
    /// `prefix[t] = U_t · U_{t-1} ··· U_0`.
    pub prefix_products: Vec<ComplexMatrix>,
    /// `suffix[t] = U_{T-1} ··· U_{t+1}` (identity at `t = T-1`).
    pub suffix_products: Vec<ComplexMatrix>,
    pub final_propagator: ComplexMatrix,
}

impl GradientTape {
    /// The splice identity `suffix[t] · U_t · prefix[t-1] = U(T)`, which must
    /// hold for every slice.
    pub fn splice(&self, t: usize) -> ComplexMatrix {
        let left = self.suffix_products[t].mul(&self.slice_unitaries[t]);
        if t == 0 {
            left
        } else {
            left.mul(&self.prefix_products[t - 1])
        }
    }
}

/// Which control parameter the gradient is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Wrt {
    Phase,
    Amplitude,
}

/// Per-slice effective controls plus the gain `dA_eff/dA` needed for
/// amplitude gradients.
struct Controls<'a> {
    amplitudes: &'a [f64],
    phases: &'a [f64],
    durations: &'a [f64],
    amp_gains: &'a [f64],
}

fn build_slices(
    drift: &ComplexMatrix,
    n_qubits: usize,
    controls: &Controls<'_>,
) -> Result<(Vec<ComplexMatrix>, Vec<HermitianEigen>)> {
    let t_slices = controls.phases.len();
    let hx = physics::collective_x(n_qubits);
    let hy = physics::collective_y(n_qubits);
    let mut slices = Vec::with_capacity(t_slices);
    let mut eigens = Vec::with_capacity(t_slices);
    let mut h = ComplexMatrix::zeros(drift.dim());
    for t in 0..t_slices {
        let (a, phi) = (controls.amplitudes[t], controls.phases[t]);
        h.clone_from(drift);
        h.axpy(a * phi.cos(), &hx);
        h.axpy(a * phi.sin(), &hy);
        let eigen = h.herm_eig()?;
        slices.push(eigen.exp_propagator(controls.durations[t]));
        eigens.push(eigen);
    }
    Ok((slices, eigens))
}

fn products(slices: &[ComplexMatrix], dim: usize) -> (Vec<ComplexMatrix>, Vec<ComplexMatrix>) {
    let t_slices = slices.len();
    let mut prefix = Vec::with_capacity(t_slices);
    let mut running = ComplexMatrix::identity(dim);
    for u in slices {
        running = u.mul(&running);
        prefix.push(running.clone());
    }
    let mut suffix = vec![ComplexMatrix::identity(dim); t_slices];
    for t in (0..t_slices.saturating_sub(1)).rev() {
        suffix[t] = suffix[t + 1].mul(&slices[t + 1]);
    }
    (prefix, suffix)
}

/// `Tr(a · b)` without forming the product.
fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    let n = a.dim();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a.get(i, j) * b.get(j, i);
        }
    }
    acc
}

fn loss_and_gradient(
    drift: &ComplexMatrix,
    n_qubits: usize,
    controls: &Controls<'_>,
    u_target: &ComplexMatrix,
    wrt: Wrt,
) -> Result<(f64, Vec<f64>)> {
    let dim = drift.dim();
    if u_target.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: u_target.dim() });
    }
    let t_slices = controls.phases.len();
    let (slices, eigens) = build_slices(drift, n_qubits, controls)?;
    let (prefix, suffix) = products(&slices, dim);
    let final_propagator = prefix.last().cloned().unwrap_or_else(|| ComplexMatrix::identity(dim));

    let d = dim as f64;
    let w = u_target.adjoint();
    let z = u_target.frobenius_inner(&final_propagator);
    let loss = 1.0 - z.norm_sqr() / (d * d);

    let hx = physics::collective_x(n_qubits);
    let hy = physics::collective_y(n_qubits);
    let mut grad = vec![0.0; t_slices];
    for t in 0..t_slices {
        let (a, phi) = (controls.amplitudes[t], controls.phases[t]);
        // ∂H/∂φ_t = A_eff·(-sinφ Hx + cosφ Hy); ∂H/∂A_t = gain·(cosφ Hx + sinφ Hy)
        let (cx, cy) = match wrt {
            Wrt::Phase => (-a * phi.sin(), a * phi.cos()),
            Wrt::Amplitude => {
                let gain = controls.amp_gains[t];
                (gain * phi.cos(), gain * phi.sin())
            }
        };
        let mut direction = hx.scale(Complex64::new(cx, 0.0));
        direction.axpy(cy, &hy);
        let slice_derivative = eigens[t].exp_frechet(&direction, controls.durations[t])?;
        // dz/dθ_t = Tr(W · suffix_t · L_t · prefix_{t-1}) = Tr(M_t · L_t)
        let m = if t == 0 {
            w.mul(&suffix[t])
        } else {
            prefix[t - 1].mul(&w).mul(&suffix[t])
        };
        let dz = trace_product(&m, &slice_derivative);
        grad[t] = -(2.0 / (d * d)) * (z.conj() * dz).re;
    }
    Ok((loss, grad))
}

fn nominal_controls(pulse: &PulseSequence) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    (
        vec![pulse.amplitude; pulse.t_slices],
        vec![pulse.dt; pulse.t_slices],
        vec![1.0; pulse.t_slices],
    )
}

/// Forward pass recording the full tape.
pub fn forward_with_tape(p: &SystemParams, pulse: &PulseSequence) -> Result<GradientTape> {
    let drift = physics::build_drift(p);
    let (amps, dts, _) = nominal_controls(pulse);
    let controls = Controls {
        amplitudes: &amps,
        phases: &pulse.phases,
        durations: &dts,
        amp_gains: &[],
    };
    let (slices, _) = build_slices(&drift, p.n_qubits, &controls)?;
    let (prefix, suffix) = products(&slices, drift.dim());
    let final_propagator =
        prefix.last().cloned().unwrap_or_else(|| ComplexMatrix::identity(drift.dim()));
    Ok(GradientTape {
        slice_unitaries: slices,
        prefix_products: prefix,
        suffix_products: suffix,
        final_propagator,
    })
}

/// Loss `1 - F` and its exact gradient with respect to every slice phase.
pub fn loss_and_phase_gradient(
    p: &SystemParams,
    pulse: &PulseSequence,
    u_target: &ComplexMatrix,
) -> Result<(f64, Vec<f64>)> {
    let drift = physics::build_drift(p);
    let (amps, dts, gains) = nominal_controls(pulse);
    let controls = Controls {
        amplitudes: &amps,
        phases: &pulse.phases,
        durations: &dts,
        amp_gains: &gains,
    };
    loss_and_gradient(&drift, p.n_qubits, &controls, u_target, Wrt::Phase)
}

/// Scenario variant: the gradient is taken at the effective per-slice
/// amplitude, phase, and duration; `∂φ_eff/∂φ_t = 1`, so the chain rule is
/// unchanged apart from the substituted quantities.
pub fn loss_and_phase_gradient_scenario(
    p: &SystemParams,
    pulse: &PulseSequence,
    u_target: &ComplexMatrix,
    sc: &Scenario,
) -> Result<(f64, Vec<f64>)> {
    let (p_eff, eff) = uncertainty::apply_scenario(p, pulse, sc)?;
    let drift = physics::build_drift(&p_eff);
    let gains: Vec<f64> = sc.alpha_j.iter().map(|&aj| sc.alpha_g * aj).collect();
    let controls = Controls {
        amplitudes: &eff.amplitudes,
        phases: &eff.phases,
        durations: &eff.durations,
        amp_gains: &gains,
    };
    loss_and_gradient(&drift, p.n_qubits, &controls, u_target, Wrt::Phase)
}

/// Loss and per-slice gradients with respect to the (nominal) amplitude.
/// Unused by the default phase-only training, but available behind the same
/// tape machinery.
pub fn loss_and_amplitude_gradient(
    p: &SystemParams,
    pulse: &PulseSequence,
    u_target: &ComplexMatrix,
) -> Result<(f64, Vec<f64>)> {
    let drift = physics::build_drift(p);
    let (amps, dts, gains) = nominal_controls(pulse);
    let controls = Controls {
        amplitudes: &amps,
        phases: &pulse.phases,
        durations: &dts,
        amp_gains: &gains,
    };
    loss_and_gradient(&drift, p.n_qubits, &controls, u_target, Wrt::Amplitude)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{CouplingModel, GateSpec};
    use crate::rng::{domain, RngStream};
    use crate::testkit::TestRng;
    use crate::uncertainty::{sample_scenario, NoiseConfig};
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    fn system() -> SystemParams {
        let mut j = BTreeMap::new();
        j.insert((1, 2), -0.064);
        j.insert((1, 3), 0.0244);
        j.insert((2, 3), 0.0341);
        SystemParams::new(3, vec![-0.921, 0.04075, 0.7], j, CouplingModel::Heisenberg).unwrap()
    }

    fn noise_defaults() -> NoiseConfig {
        NoiseConfig {
            sigma_v: 0.002,
            sigma_j: 0.005,
            sigma_a_bias: 0.03,
            sigma_a_jit: 0.02,
            sigma_phi0: 2.0_f64.to_radians(),
            sigma_phi_jit: 0.5_f64.to_radians(),
            sigma_dt: 0.005,
            sigma_dt_jit: 0.002,
        }
    }

    fn random_pulse(t: usize, rng: &mut TestRng) -> PulseSequence {
        let phases = (0..t).map(|_| PI * rng.sym()).collect();
        PulseSequence::new(phases, 1.0, 0.01).unwrap()
    }

    fn random_target(rng: &mut TestRng) -> ComplexMatrix {
        let g = GateSpec::new(
            rng.uniform() * PI / 2.0,
            rng.uniform() * PI / 2.0,
            rng.uniform() * PI / 2.0,
        );
        physics::gate_target(&g, 3)
    }

    #[test]
    fn tape_single_slice() {
        let p = system();
        let pulse = PulseSequence::new(vec![0.4], 1.0, 0.01).unwrap();
        let tape = forward_with_tape(&p, &pulse).unwrap();
        let id = ComplexMatrix::identity(8);
        assert!(tape.suffix_products[0].frobenius_distance(&id) < 1e-15);
        assert!(tape.prefix_products[0].frobenius_distance(&tape.slice_unitaries[0]) < 1e-15);
        assert!(tape.final_propagator.frobenius_distance(&tape.slice_unitaries[0]) < 1e-15);
    }

    #[test]
    fn tape_zero_hamiltonian_is_all_identities() {
        let p = SystemParams::new(3, vec![0.0; 3], BTreeMap::new(), CouplingModel::Heisenberg)
            .unwrap();
        let pulse = PulseSequence::new(vec![0.7; 3], 0.0, 0.01).unwrap();
        let tape = forward_with_tape(&p, &pulse).unwrap();
        let id = ComplexMatrix::identity(8);
        for t in 0..3 {
            assert!(tape.slice_unitaries[t].frobenius_distance(&id) < 1e-12);
            assert!(tape.prefix_products[t].frobenius_distance(&id) < 1e-12);
            assert!(tape.suffix_products[t].frobenius_distance(&id) < 1e-12);
        }
    }

    #[test]
    fn tape_splice_identity() {
        let p = system();
        let mut rng = TestRng::new(3);
        let pulse = random_pulse(3, &mut rng);
        let tape = forward_with_tape(&p, &pulse).unwrap();
        for t in 0..3 {
            assert!(tape.splice(t).frobenius_distance(&tape.final_propagator) < 1e-9);
        }
        // direct product oracle for the final propagator
        let u = physics::propagate(&p, &pulse).unwrap();
        assert!(tape.final_propagator.frobenius_distance(&u) < 1e-12);
    }

    #[test]
    fn zero_amplitude_kills_phase_gradient() {
        let p = system();
        let mut rng = TestRng::new(4);
        let mut pulse = random_pulse(5, &mut rng);
        pulse.amplitude = 0.0;
        let target = random_target(&mut rng);
        let (_, grad) = loss_and_phase_gradient(&p, &pulse, &target).unwrap();
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gradient_vanishes_at_fidelity_maximum() {
        let p = system();
        let mut rng = TestRng::new(5);
        let pulse = random_pulse(6, &mut rng);
        // Target the pulse's own propagator: loss 0, stationary point.
        let target = physics::propagate(&p, &pulse).unwrap();
        let (loss, grad) = loss_and_phase_gradient(&p, &pulse, &target).unwrap();
        assert!(loss.abs() < 1e-12);
        for g in grad {
            assert!(g.abs() < 1e-10, "gradient {g} at the maximum");
        }
    }

    fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
        let scale = numeric.iter().map(|g| g.abs()).fold(0.0f64, f64::max).max(1e-12);
        analytic
            .iter()
            .zip(numeric)
            .map(|(a, n)| (a - n).abs() / scale)
            .fold(0.0, f64::max)
    }

    #[test]
    fn phase_gradient_matches_finite_difference() {
        let p = system();
        let mut rng = TestRng::new(6);
        for _ in 0..3 {
            let pulse = random_pulse(8, &mut rng);
            let target = random_target(&mut rng);
            let (_, grad) = loss_and_phase_gradient(&p, &pulse, &target).unwrap();
            let numeric: Vec<f64> = (0..8)
                .map(|t| {
                    crate::testkit::central_difference(
                        |phases| {
                            let probe =
                                PulseSequence::new(phases.to_vec(), pulse.amplitude, pulse.dt)
                                    .unwrap();
                            let u = physics::propagate(&p, &probe).unwrap();
                            1.0 - physics::fidelity(&target, &u).unwrap()
                        },
                        &pulse.phases,
                        t,
                        1e-6,
                    )
                })
                .collect();
            let err = max_rel_error(&grad, &numeric);
            assert!(err < 1e-6, "max relative error {err}");
        }
    }

    #[test]
    fn scenario_gradient_nominal_reduction() {
        let p = system();
        let mut rng = TestRng::new(7);
        let pulse = random_pulse(6, &mut rng);
        let target = random_target(&mut rng);
        let sc = sample_scenario(&NoiseConfig::zero(), 6, RngStream::new(1).child(domain::SCENARIO));
        let (l0, g0) = loss_and_phase_gradient(&p, &pulse, &target).unwrap();
        let (l1, g1) = loss_and_phase_gradient_scenario(&p, &pulse, &target, &sc).unwrap();
        assert!((l0 - l1).abs() < 1e-14);
        for (a, b) in g0.iter().zip(&g1) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn pure_phase_offset_matches_shifted_nominal() {
        let p = system();
        let mut rng = TestRng::new(8);
        let pulse = random_pulse(5, &mut rng);
        let target = random_target(&mut rng);
        let offset = 0.37;
        let mut sc = Scenario::nominal(5);
        sc.phi0 = offset;
        let (ls, gs) = loss_and_phase_gradient_scenario(&p, &pulse, &target, &sc).unwrap();

        let shifted: Vec<f64> = pulse.phases.iter().map(|&x| x + offset).collect();
        let shifted_pulse = PulseSequence::new(shifted, pulse.amplitude, pulse.dt).unwrap();
        let (ln, gn) = loss_and_phase_gradient(&p, &shifted_pulse, &target).unwrap();
        assert!((ls - ln).abs() < 1e-13);
        for (a, b) in gs.iter().zip(&gn) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scenario_gradient_matches_finite_difference() {
        let p = system().with_coupling_model(CouplingModel::Zz);
        let mut rng = TestRng::new(9);
        let pulse = random_pulse(6, &mut rng);
        let target = random_target(&mut rng);
        let sc = sample_scenario(
            &noise_defaults(),
            6,
            RngStream::new(44).child(domain::SCENARIO).child(0),
        );
        let (_, grad) = loss_and_phase_gradient_scenario(&p, &pulse, &target, &sc).unwrap();
        let numeric: Vec<f64> = (0..6)
            .map(|t| {
                crate::testkit::central_difference(
                    |phases| {
                        let probe =
                            PulseSequence::new(phases.to_vec(), pulse.amplitude, pulse.dt)
                                .unwrap();
                        let u = uncertainty::propagate_scenario(&p, &probe, &sc).unwrap();
                        1.0 - physics::fidelity(&target, &u).unwrap()
                    },
                    &pulse.phases,
                    t,
                    1e-6,
                )
            })
            .collect();
        let err = max_rel_error(&grad, &numeric);
        assert!(err < 1e-6, "max relative error {err}");
    }

    #[test]
    fn amplitude_gradient_matches_finite_difference() {
        let p = system();
        let mut rng = TestRng::new(10);
        let pulse = random_pulse(5, &mut rng);
        let target = random_target(&mut rng);
        let (_, grad) = loss_and_amplitude_gradient(&p, &pulse, &target).unwrap();
        // Sum over slices equals the derivative with respect to the shared
        // constant amplitude.
        let total: f64 = grad.iter().sum();
        let delta = 1e-6;
        let eval = |a: f64| {
            let probe = PulseSequence::new(pulse.phases.clone(), a, pulse.dt).unwrap();
            let u = physics::propagate(&p, &probe).unwrap();
            1.0 - physics::fidelity(&target, &u).unwrap()
        };
        let numeric = (eval(pulse.amplitude + delta) - eval(pulse.amplitude - delta)) / (2.0 * delta);
        assert!(
            (total - numeric).abs() / numeric.abs().max(1e-12) < 1e-6,
            "analytic {total}, numeric {numeric}"
        );
    }
}
