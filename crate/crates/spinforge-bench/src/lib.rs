//! Shared fixtures for the kernel benchmarks.

use std::collections::BTreeMap;

use spinforge_core::physics::{CouplingModel, PulseSequence, SystemParams};
use spinforge_core::testkit::TestRng;

/// The standard three-spin register used across the benchmarks.
pub fn benchmark_system(model: CouplingModel) -> SystemParams {
    let mut j = BTreeMap::new();
    j.insert((1, 2), -0.064);
    j.insert((1, 3), 0.0244);
    j.insert((2, 3), 0.0341);
    SystemParams::new(3, vec![-0.921, 0.04075, 0.7], j, model).unwrap()
}

/// A reproducible random pulse of `t` slices.
pub fn benchmark_pulse(t: usize, seed: u64) -> PulseSequence {
    let mut rng = TestRng::new(seed);
    let phases = (0..t).map(|_| std::f64::consts::PI * rng.sym()).collect();
    PulseSequence::new(phases, 1.0, 0.01).unwrap()
}
