//! Exact laboratory for multi-sample query complexity.
//!
//! The crate computes complexity measures of partial boolean functions at
//! desk scale (deterministic, distributional, correlated-samples, block
//! sensitivity and its fractional relaxation, tiny-instance randomized
//! complexity), manipulates multi-sample decision trees as likelihood
//! boosters, simulates the phase-based bootstrapping algorithm that turns
//! overall boosters into uniform ones, and verifies every lemma-level
//! inequality either with exact rational arithmetic or seeded Monte Carlo.
//!
//! Probability arithmetic is exact rational throughout; floating point only
//! appears in logarithm-valued progress measures and summary statistics. All
//! randomized suites consume an explicit 64-bit seed (see [`rng`]).

pub mod boosters;
pub mod bootstrap;
pub mod compose;
pub mod domain;
pub mod dtree;
pub mod error;
pub mod exact;
pub mod instances;
pub mod par;
pub mod pipeline;
pub mod ratio;
pub mod reductions;
pub mod rng;

pub use error::{Error, Result};
pub use ratio::Rat;
