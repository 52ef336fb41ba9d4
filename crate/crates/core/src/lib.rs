//! Simulation and benchmarking of quantum multivariate mean estimators.
//!
//! Distributions are finite and exact; quantum subroutines are replaced by
//! semantic oracles that return the phase functions they would implement,
//! and grid Fourier transforms are computed classically.

pub mod estimators;
pub mod gridqft;
pub mod hardness;
pub mod harness;
pub mod oracles;
pub mod probspace;

/// Seeded generator used by every stochastic component.
pub type SimRng = rand_chacha::ChaCha8Rng;

pub use gridqft::{GridSpec, GridState};
pub use oracles::{CostLedger, CostModel, NoiseModel, PhaseFunction};
pub use probspace::{parse_distribution_spec, RandomVariable};
