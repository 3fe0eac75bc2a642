//! Counter-based deterministic random streams.
//!
//! Every random quantity in the crate is addressed by a path of integers
//! folded into a 64-bit key (master seed, domain tag, gate index, scenario
//! index, knob, slice, ...). Draws are stateless functions of (key, counter),
//! so results do not depend on evaluation order or thread count.

use std::f64::consts::TAU;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer; a strong 64-bit bijective mixer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn fold(key: u64, data: u64) -> u64 {
    mix64(key.wrapping_add(GOLDEN).wrapping_add(mix64(data.wrapping_add(GOLDEN))))
}

/// Top-level stream domains, folded right after the master seed so that
/// gate sampling, dropout, scenarios, etc. never share draws.
pub mod domain {
    pub const GATES: u64 = 0x01;
    pub const VALIDATION: u64 = 0x02;
    pub const INIT: u64 = 0x03;
    pub const DROPOUT: u64 = 0x04;
    pub const SCENARIO: u64 = 0x05;
    pub const SWEEP: u64 = 0x06;
}

/// A keyed random stream. `child` refines the path; the `*_at` accessors
/// draw at an explicit counter without mutating anything.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    key: u64,
}

impl RngStream {
    pub fn new(master_seed: u64) -> Self {
        Self { key: mix64(master_seed ^ GOLDEN) }
    }

    /// Derive a sub-stream for one path component (domain tag, index, ...).
    #[must_use]
    pub fn child(self, index: u64) -> Self {
        Self { key: fold(self.key, index) }
    }

    #[inline]
    pub fn u64_at(self, counter: u64) -> u64 {
        fold(self.key, counter)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform_at(self, counter: u64) -> f64 {
        (self.u64_at(counter) >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform in `(0, 1]`; safe as a log argument.
    #[inline]
    fn uniform_open_at(self, counter: u64) -> f64 {
        ((self.u64_at(counter) >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal draw via Box-Muller. Consumes counters 2c and 2c+1,
    /// so consecutive counters never overlap.
    pub fn normal_at(self, counter: u64) -> f64 {
        let u1 = self.uniform_open_at(2 * counter);
        let u2 = self.uniform_at(2 * counter + 1);
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    }
}
