//! Pulse-level compilation of single-qubit gates for a three-spin NMR
//! register, with risk-aware re-optimization under a prescribed uncertainty
//! set.
//!
//! The crate is organized bottom-up:
//!
//! - [`linalg`]: dense complex matrices, Hermitian eigendecomposition,
//!   matrix exponential and its Fréchet derivative.
//! - [`physics`]: drift/control Hamiltonians, time-ordered propagator,
//!   axis-angle targets, unitary fidelity.
//! - [`uncertainty`]: the eight-knob perturbation model, scenario sampling,
//!   effective dynamics, and single-channel sweeps.
//! - [`adjoint`]: exact gradients of the fidelity loss with respect to the
//!   per-slice controls.
//! - [`mlp`]: the compiler network (explicit forward/backward) and AdamW.
//! - [`risk`]: loss aggregation (mean / worst / RU-CVaR) and the TV and
//!   spectral regularizers.
//! - [`pipeline`]: training loops, grid evaluation, sweep studies.
//! - [`config`]: the JSON run-configuration schema.
//!
//! All randomness flows through counter-based streams ([`rng`]), so every
//! artifact is reproducible bit-for-bit for a fixed master seed, independent
//! of thread count.

pub mod adjoint;
pub mod config;
pub mod error;
pub mod linalg;
pub mod mlp;
pub mod physics;
pub mod pipeline;
pub mod risk;
pub mod rng;
pub mod testkit;
pub mod uncertainty;

pub use error::{Error, Result};
pub use linalg::ComplexMatrix;
pub use physics::{CouplingModel, GateSpec, PulseSequence, SystemParams};
pub use rng::RngStream;
