//! Differentially private continual release of MaxSum and SumSelect.
//!
//! A stream of `d`-bit records arrives one per timestep; after each record
//! a mechanism publishes either the largest column sum so far (MaxSum) or
//! the index of a column attaining it (SumSelect). Two mechanisms are
//! provided: the binary tree mechanism in [`tree`] and the
//! recompute-at-intervals mechanism in [`recompute`]. [`game`] plays the
//! adaptive privacy game against them and [`experiment`] drives the CLI.

pub mod error;
pub mod experiment;
pub mod game;
pub mod mechanism;
pub mod noise;
pub mod recompute;
pub mod stream;
pub mod tree;

pub use error::{Error, Result};
pub use mechanism::{run_stream, Mechanism, MechanismSpec, Query, TrivialMechanism};
pub use noise::{NoiseKind, PrivacyBudget, SeedKey, ZcdpAccountant};
pub use recompute::{optimal_period, Period, RecomputeMechanism, StageNoise, Target};
pub use stream::{Answer, ColumnSums, Record, StreamPrefix};
pub use tree::{Interval, TreeMechanism};
