//! The eight-knob perturbation model: scenario sampling, effective dynamics,
//! and single-channel sweeps.
//!
//! Two knobs perturb the Hamiltonian quasi-statically (relative shifts of all
//! local frequencies and of all couplings); six perturb the control chain
//! (amplitude bias and per-slice jitter, phase offset and per-slice jitter,
//! timing scale and per-slice jitter). All draws are Gaussian around the
//! nominal value and addressed by counter-based RNG paths, so a scenario is a
//! pure function of its path.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::physics::{self, GateSpec, PulseSequence, SystemParams};
use crate::rng::RngStream;

/// Standard deviations of the eight uncertainty knobs. Phases are radians;
/// the `*_rel` quantities are relative (dimensionless).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Relative local-frequency noise (quasi-static).
    pub sigma_v: f64,
    /// Relative coupling noise (quasi-static).
    pub sigma_j: f64,
    /// Amplitude gain bias (quasi-static, relative).
    pub sigma_a_bias: f64,
    /// Amplitude jitter (per slice, relative).
    pub sigma_a_jit: f64,
    /// Phase offset (quasi-static, radians).
    pub sigma_phi0: f64,
    /// Phase jitter (per slice, radians).
    pub sigma_phi_jit: f64,
    /// Timing scale (quasi-static, relative).
    pub sigma_dt: f64,
    /// Timing jitter (per slice, relative).
    pub sigma_dt_jit: f64,
}

impl NoiseConfig {
    pub fn zero() -> Self {
        Self {
            sigma_v: 0.0,
            sigma_j: 0.0,
            sigma_a_bias: 0.0,
            sigma_a_jit: 0.0,
            sigma_phi0: 0.0,
            sigma_phi_jit: 0.0,
            sigma_dt: 0.0,
            sigma_dt_jit: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.sigma_v,
            self.sigma_j,
            self.sigma_a_bias,
            self.sigma_a_jit,
            self.sigma_phi0,
            self.sigma_phi_jit,
            self.sigma_dt,
            self.sigma_dt_jit,
        ];
        if all.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::ConfigError("noise sigmas must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// One joint realization of the eight knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Relative shift of all local frequencies (quasi-static).
    pub dv: f64,
    /// Relative shift of all couplings (quasi-static).
    pub dj: f64,
    /// Global amplitude gain.
    pub alpha_g: f64,
    /// Per-slice amplitude gains.
    pub alpha_j: Vec<f64>,
    /// Global phase offset, radians.
    pub phi0: f64,
    /// Per-slice phase jitter, radians.
    pub phi_j: Vec<f64>,
    /// Global timing scale.
    pub beta_dt: f64,
    /// Per-slice timing jitter (relative, additive to `beta_dt`).
    pub dt_jit: Vec<f64>,
}

impl Scenario {
    /// The do-nothing scenario: every effective quantity equals its nominal.
    pub fn nominal(t_slices: usize) -> Self {
        Self {
            dv: 0.0,
            dj: 0.0,
            alpha_g: 1.0,
            alpha_j: vec![1.0; t_slices],
            phi0: 0.0,
            phi_j: vec![0.0; t_slices],
            beta_dt: 1.0,
            dt_jit: vec![0.0; t_slices],
        }
    }

    pub fn t_slices(&self) -> usize {
        self.alpha_j.len()
    }
}

// Knob identifiers inside a scenario's RNG path.
const KNOB_DV: u64 = 0;
const KNOB_DJ: u64 = 1;
const KNOB_ALPHA_G: u64 = 2;
const KNOB_ALPHA_J: u64 = 3;
const KNOB_PHI0: u64 = 4;
const KNOB_PHI_J: u64 = 5;
const KNOB_BETA_DT: u64 = 6;
const KNOB_DT_JIT: u64 = 7;

/// Sample one scenario from the configured Gaussians. Realizations whose
/// effective slice duration would be non-positive are rejected and redrawn
/// under a fresh attempt index (vanishing probability at realistic sigmas).
pub fn sample_scenario(cfg: &NoiseConfig, t_slices: usize, rng: RngStream) -> Scenario {
    for attempt in 0..u64::MAX {
        let r = rng.child(attempt);
        let sc = Scenario {
            dv: cfg.sigma_v * r.child(KNOB_DV).normal_at(0),
            dj: cfg.sigma_j * r.child(KNOB_DJ).normal_at(0),
            alpha_g: 1.0 + cfg.sigma_a_bias * r.child(KNOB_ALPHA_G).normal_at(0),
            alpha_j: (0..t_slices)
                .map(|t| 1.0 + cfg.sigma_a_jit * r.child(KNOB_ALPHA_J).normal_at(t as u64))
                .collect(),
            phi0: cfg.sigma_phi0 * r.child(KNOB_PHI0).normal_at(0),
            phi_j: (0..t_slices)
                .map(|t| cfg.sigma_phi_jit * r.child(KNOB_PHI_J).normal_at(t as u64))
                .collect(),
            beta_dt: 1.0 + cfg.sigma_dt * r.child(KNOB_BETA_DT).normal_at(0),
            dt_jit: (0..t_slices)
                .map(|t| cfg.sigma_dt_jit * r.child(KNOB_DT_JIT).normal_at(t as u64))
                .collect(),
        };
        let timing_ok = sc.dt_jit.iter().all(|&jit| sc.beta_dt + jit > 0.0);
        if timing_ok {
            return sc;
        }
    }
    unreachable!("scenario resampling cannot exhaust the attempt space");
}

/// Per-slice effective control sequences produced by a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveControls {
    /// `A · α_g · α_j(t)`, kHz.
    pub amplitudes: Vec<f64>,
    /// `φ_t + φ0 + φ_j(t)`, radians.
    pub phases: Vec<f64>,
    /// `Δt · (β_dt + δ_jit(t))`, ms.
    pub durations: Vec<f64>,
}

/// Apply a scenario: perturbed system parameters plus effective per-slice
/// amplitude/phase/duration sequences.
pub fn apply_scenario(
    p: &SystemParams,
    pulse: &PulseSequence,
    sc: &Scenario,
) -> Result<(SystemParams, EffectiveControls)> {
    if sc.t_slices() != pulse.t_slices {
        return Err(Error::ShapeMismatch(format!(
            "scenario has {} slices, pulse has {}",
            sc.t_slices(),
            pulse.t_slices
        )));
    }
    let p_eff = p.perturbed(sc.dv, sc.dj);
    let amplitudes: Vec<f64> =
        sc.alpha_j.iter().map(|&aj| pulse.amplitude * sc.alpha_g * aj).collect();
    let phases: Vec<f64> = pulse
        .phases
        .iter()
        .zip(&sc.phi_j)
        .map(|(&phi, &jit)| phi + sc.phi0 + jit)
        .collect();
    let mut durations = Vec::with_capacity(pulse.t_slices);
    for (slice, &jit) in sc.dt_jit.iter().enumerate() {
        let dt = pulse.dt * (sc.beta_dt + jit);
        if dt <= 0.0 {
            return Err(Error::NegativeDuration { slice });
        }
        durations.push(dt);
    }
    Ok((p_eff, EffectiveControls { amplitudes, phases, durations }))
}

/// Time-ordered propagator under a scenario's effective dynamics. The drift
/// is rebuilt from the perturbed parameters with the coupling model carried
/// by `p` (the robust stage passes a ZZ-model system).
pub fn propagate_scenario(
    p: &SystemParams,
    pulse: &PulseSequence,
    sc: &Scenario,
) -> Result<ComplexMatrix> {
    let (p_eff, controls) = apply_scenario(p, pulse, sc)?;
    let drift = physics::build_drift(&p_eff);
    physics::propagate_controls(
        &drift,
        p.n_qubits,
        &controls.amplitudes,
        &controls.phases,
        &controls.durations,
    )
}

/// A single perturbation channel for sweep studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepChannel {
    /// Global amplitude scale (deterministic; 1 = nominal).
    AlphaG,
    /// Global phase offset in radians (deterministic; 0 = nominal).
    Phi0,
    /// Scale on all local frequencies (deterministic; 1 = nominal).
    VScale,
    /// Scale on all couplings (deterministic; 1 = nominal).
    JScale,
    /// Global timing scale (deterministic; 1 = nominal).
    DtScale,
    /// Per-slice amplitude jitter std (stochastic; 0 = nominal).
    AJitStd,
    /// Per-slice phase jitter std in radians (stochastic; 0 = nominal).
    PhiJitStd,
    /// Per-slice timing jitter std (stochastic; 0 = nominal).
    DtJitStd,
}

impl SweepChannel {
    pub const ALL: [SweepChannel; 8] = [
        SweepChannel::AlphaG,
        SweepChannel::Phi0,
        SweepChannel::VScale,
        SweepChannel::JScale,
        SweepChannel::DtScale,
        SweepChannel::AJitStd,
        SweepChannel::PhiJitStd,
        SweepChannel::DtJitStd,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SweepChannel::AlphaG => "alpha_g",
            SweepChannel::Phi0 => "phi0",
            SweepChannel::VScale => "v_scale",
            SweepChannel::JScale => "j_scale",
            SweepChannel::DtScale => "dt_scale",
            SweepChannel::AJitStd => "a_jit_std",
            SweepChannel::PhiJitStd => "phi_jit_std",
            SweepChannel::DtJitStd => "dt_jit_std",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == name)
            .ok_or_else(|| Error::UnknownChannel(name.to_string()))
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            SweepChannel::AJitStd | SweepChannel::PhiJitStd | SweepChannel::DtJitStd
        )
    }

    /// The channel value at which nothing is perturbed.
    pub fn nominal_value(&self) -> f64 {
        match self {
            SweepChannel::AlphaG
            | SweepChannel::VScale
            | SweepChannel::JScale
            | SweepChannel::DtScale => 1.0,
            SweepChannel::Phi0
            | SweepChannel::AJitStd
            | SweepChannel::PhiJitStd
            | SweepChannel::DtJitStd => 0.0,
        }
    }

    fn deterministic_scenario(&self, value: f64, t_slices: usize) -> Scenario {
        let mut sc = Scenario::nominal(t_slices);
        match self {
            SweepChannel::AlphaG => sc.alpha_g = value,
            SweepChannel::Phi0 => sc.phi0 = value,
            SweepChannel::VScale => sc.dv = value - 1.0,
            SweepChannel::JScale => sc.dj = value - 1.0,
            SweepChannel::DtScale => sc.beta_dt = value,
            _ => unreachable!("stochastic channels take the sampling path"),
        }
        sc
    }

    fn jitter_scenario(&self, std: f64, t_slices: usize, rng: RngStream) -> Scenario {
        let mut cfg = NoiseConfig::zero();
        match self {
            SweepChannel::AJitStd => cfg.sigma_a_jit = std,
            SweepChannel::PhiJitStd => cfg.sigma_phi_jit = std,
            SweepChannel::DtJitStd => cfg.sigma_dt_jit = std,
            _ => unreachable!("deterministic channels never sample"),
        }
        sample_scenario(&cfg, t_slices, rng)
    }
}

/// Mean fidelity over a gate set with exactly one perturbation channel set to
/// `value` and everything else nominal. Deterministic channels evaluate one
/// scenario per gate; jitter-std channels average `repeats` realizations per
/// gate with RNG paths keyed by (gate index, repeat).
pub fn sweep_channel(
    channel: SweepChannel,
    value: f64,
    p: &SystemParams,
    gates: &[GateSpec],
    pulse_source: &(impl Fn(&GateSpec) -> PulseSequence + Sync),
    repeats: usize,
    rng: RngStream,
) -> Result<f64> {
    if gates.is_empty() {
        return Err(Error::EmptyInput);
    }
    let fidelities: Vec<f64> = gates
        .par_iter()
        .enumerate()
        .map(|(gate_ix, gate)| -> Result<f64> {
            let pulse = pulse_source(gate);
            let target = physics::gate_target(gate, p.n_qubits);
            if channel.is_stochastic() {
                let mut acc = 0.0;
                for repeat in 0..repeats {
                    let sc = channel.jitter_scenario(
                        value,
                        pulse.t_slices,
                        rng.child(gate_ix as u64).child(repeat as u64),
                    );
                    let u = propagate_scenario(p, &pulse, &sc)?;
                    acc += physics::fidelity(&target, &u)?;
                }
                Ok(acc / repeats as f64)
            } else {
                let sc = channel.deterministic_scenario(value, pulse.t_slices);
                let u = propagate_scenario(p, &pulse, &sc)?;
                physics::fidelity(&target, &u)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(fidelities.iter().sum::<f64>() / fidelities.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::CouplingModel;
    use crate::rng::domain;
    use crate::testkit::{self, TestRng};
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    fn system(model: CouplingModel) -> SystemParams {
        let mut j = BTreeMap::new();
        j.insert((1, 2), -0.064);
        j.insert((1, 3), 0.0244);
        j.insert((2, 3), 0.0341);
        SystemParams::new(3, vec![-0.921, 0.04075, 0.7], j, model).unwrap()
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

    #[test]
    fn zero_sigma_scenario_is_nominal() {
        let sc = sample_scenario(&NoiseConfig::zero(), 5, RngStream::new(1).child(domain::SCENARIO));
        assert_eq!(sc, Scenario::nominal(5));
    }

    #[test]
    fn same_path_same_scenario() {
        let cfg = noise_defaults();
        let path = RngStream::new(9).child(domain::SCENARIO).child(4).child(2);
        let a = sample_scenario(&cfg, 8, path);
        let b = sample_scenario(&cfg, 8, path);
        assert_eq!(a, b);
        let c = sample_scenario(&cfg, 8, RngStream::new(9).child(domain::SCENARIO).child(4).child(3));
        assert_ne!(a, c);
    }

    #[test]
    fn dv_sample_std_matches_sigma() {
        let cfg = noise_defaults();
        let root = RngStream::new(77).child(domain::SCENARIO);
        let n = 100_000;
        let mut sq = 0.0;
        for i in 0..n {
            let sc = sample_scenario(&cfg, 1, root.child(i));
            sq += sc.dv * sc.dv;
        }
        let std = (sq / n as f64).sqrt();
        assert!((std - 0.002).abs() / 0.002 < 0.01, "std {std}");
    }

    #[test]
    fn nominal_scenario_passes_through() {
        let p = system(CouplingModel::Heisenberg);
        let mut rng = TestRng::new(3);
        let pulse = random_pulse(6, &mut rng);
        let (p_eff, controls) = apply_scenario(&p, &pulse, &Scenario::nominal(6)).unwrap();
        assert_eq!(p_eff, p);
        assert_eq!(controls.phases, pulse.phases);
        assert!(controls.amplitudes.iter().all(|&a| a == pulse.amplitude));
        assert!(controls.durations.iter().all(|&d| d == pulse.dt));
    }

    #[test]
    fn single_knob_isolation() {
        let p = system(CouplingModel::Zz);
        let mut rng = TestRng::new(4);
        let pulse = random_pulse(5, &mut rng);
        let mut sc = Scenario::nominal(5);
        sc.alpha_g = 1.05;
        let (p_eff, controls) = apply_scenario(&p, &pulse, &sc).unwrap();
        assert_eq!(p_eff, p);
        assert_eq!(controls.phases, pulse.phases);
        assert!(controls.durations.iter().all(|&d| d == pulse.dt));
        for &a in &controls.amplitudes {
            assert!((a - 1.05 * pulse.amplitude).abs() < 1e-15);
        }
    }

    #[test]
    fn effective_formulas_spot_check() {
        let p = system(CouplingModel::Zz);
        let mut rng = TestRng::new(5);
        let pulse = random_pulse(4, &mut rng);
        let sc = sample_scenario(
            &noise_defaults(),
            4,
            RngStream::new(21).child(domain::SCENARIO).child(0),
        );
        let (p_eff, controls) = apply_scenario(&p, &pulse, &sc).unwrap();
        for t in [0usize, 2, 3] {
            let phi = pulse.phases[t] + sc.phi0 + sc.phi_j[t];
            let amp = pulse.amplitude * sc.alpha_g * sc.alpha_j[t];
            let dur = pulse.dt * (sc.beta_dt + sc.dt_jit[t]);
            assert!((controls.phases[t] - phi).abs() < 1e-15);
            assert!((controls.amplitudes[t] - amp).abs() < 1e-15);
            assert!((controls.durations[t] - dur).abs() < 1e-15);
        }
        for (i, &vi) in p.v.iter().enumerate() {
            assert!((p_eff.v[i] - (1.0 + sc.dv) * vi).abs() < 1e-15);
        }
        for (key, &jij) in &p.j {
            assert!((p_eff.j[key] - (1.0 + sc.dj) * jij).abs() < 1e-15);
        }
    }

    #[test]
    fn negative_duration_rejected() {
        let p = system(CouplingModel::Zz);
        let pulse = PulseSequence::new(vec![0.0; 3], 1.0, 0.01).unwrap();
        let mut sc = Scenario::nominal(3);
        sc.beta_dt = 0.5;
        sc.dt_jit[1] = -0.6;
        let err = apply_scenario(&p, &pulse, &sc).unwrap_err();
        assert_eq!(err, Error::NegativeDuration { slice: 1 });
    }

    #[test]
    fn nominal_propagation_matches_physics() {
        let p = system(CouplingModel::Heisenberg);
        let mut rng = TestRng::new(6);
        let pulse = random_pulse(6, &mut rng);
        let u_sc = propagate_scenario(&p, &pulse, &Scenario::nominal(6)).unwrap();
        let u = physics::propagate(&p, &pulse).unwrap();
        assert!(u_sc.frobenius_distance(&u) < 1e-14);
    }

    #[test]
    fn doubled_timing_doubles_diagonal_phases() {
        // A = 0 and ZZ drift: the propagator is diagonal; beta_dt = 2 squares it.
        let p = system(CouplingModel::Zz);
        let pulse = PulseSequence::new(vec![0.0; 4], 0.0, 0.01).unwrap();
        let mut sc = Scenario::nominal(4);
        sc.beta_dt = 2.0;
        let u2 = propagate_scenario(&p, &pulse, &sc).unwrap();
        let u1 = propagate_scenario(&p, &pulse, &Scenario::nominal(4)).unwrap();
        let squared = u1.mul(&u1);
        assert!(u2.frobenius_distance(&squared) < 1e-11);
    }

    #[test]
    fn random_scenario_matches_taylor_oracle() {
        let p = system(CouplingModel::Zz);
        let mut rng = TestRng::new(8);
        let pulse = random_pulse(6, &mut rng);
        let sc = sample_scenario(
            &noise_defaults(),
            6,
            RngStream::new(33).child(domain::SCENARIO).child(1),
        );
        let u = propagate_scenario(&p, &pulse, &sc).unwrap();

        let (p_eff, controls) = apply_scenario(&p, &pulse, &sc).unwrap();
        let drift = physics::build_drift(&p_eff);
        let mut oracle = ComplexMatrix::identity(8);
        for t in 0..6 {
            let mut h = drift.clone();
            h.axpy(1.0, &physics::build_control(controls.phases[t], controls.amplitudes[t], 3));
            oracle = testkit::taylor_expm(&h, controls.durations[t]).mul(&oracle);
        }
        assert!(u.frobenius_distance(&oracle) < 1e-9);
        assert!(u.is_unitary(1e-9));
    }

    #[test]
    fn channel_names_round_trip() {
        for channel in SweepChannel::ALL {
            assert_eq!(SweepChannel::parse(channel.name()).unwrap(), channel);
        }
        assert!(matches!(
            SweepChannel::parse("bogus"),
            Err(Error::UnknownChannel(_))
        ));
    }

    #[test]
    fn nominal_channel_values_reproduce_nominal_fidelity() {
        let p = system(CouplingModel::Zz);
        let mut rng = TestRng::new(13);
        let gates: Vec<GateSpec> = (0..4)
            .map(|_| GateSpec::new(rng.uniform() * 1.5, rng.uniform() * 1.5, rng.uniform() * 1.5))
            .collect();
        let t = 6;
        let source = |g: &GateSpec| {
            let phases = (0..t).map(|k| 0.3 * g.gamma + 0.1 * k as f64).collect();
            PulseSequence::new(phases, 1.0, 0.01).unwrap()
        };
        let nominal: f64 = gates
            .iter()
            .map(|g| {
                let u = physics::propagate(&p, &source(g)).unwrap();
                physics::fidelity(&physics::gate_target(g, 3), &u).unwrap()
            })
            .sum::<f64>()
            / gates.len() as f64;
        let rng_stream = RngStream::new(5).child(domain::SWEEP);
        for channel in [SweepChannel::AlphaG, SweepChannel::Phi0, SweepChannel::DtScale] {
            let mean = sweep_channel(
                channel,
                channel.nominal_value(),
                &p,
                &gates,
                &source,
                4,
                rng_stream,
            )
            .unwrap();
            assert!((mean - nominal).abs() < 1e-12, "{}: {mean} vs {nominal}", channel.name());
        }
        // Stochastic channel at std 0 is also exactly nominal.
        let mean = sweep_channel(SweepChannel::AJitStd, 0.0, &p, &gates, &source, 4, rng_stream)
            .unwrap();
        assert!((mean - nominal).abs() < 1e-12);
    }

    #[test]
    fn sweep_is_deterministic() {
        let p = system(CouplingModel::Zz);
        let gates = vec![GateSpec::new(0.8, 0.6, 0.4), GateSpec::new(1.2, 0.3, 0.9)];
        let source = |g: &GateSpec| {
            PulseSequence::new(vec![g.alpha, g.gamma, g.theta, 0.0], 1.0, 0.01).unwrap()
        };
        let rng_stream = RngStream::new(42).child(domain::SWEEP);
        let a = sweep_channel(SweepChannel::PhiJitStd, 0.05, &p, &gates, &source, 8, rng_stream)
            .unwrap();
        let b = sweep_channel(SweepChannel::PhiJitStd, 0.05, &p, &gates, &source, 8, rng_stream)
            .unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
